"""
[API] Closed-form Hamiltonian calculus.

    H0(p) = sup_{v in K} { p v - a(v) }
    H1(x, h, mu, p) = sup_{s in [0,1]} { s f(h) F p - zeta h p + u_sigma(A(x) ((1 - s) f(h))^(1 - gamma) F^gamma) }

The saving supremum is attained at s_bar = 0 up to the threshold momentum p0 and at
s_bar = 1 - (p0 / p)^(1 / (1 - eta)) above it. Every function has a vectorized core working
on local coefficients (A(x), f(h), F(x, mu), h, p) used by the grid solvers, and a
pointwise form taking (x, h, mu, p).
"""

import logging
import math
from typing import Dict, Optional, Tuple

import numpy as np

from capmfg import rng
from capmfg.interaction import F
from capmfg.measures import EmpiricalMeasure, moment_M, moment_M2
from capmfg.params import ModelParams

logger = logging.getLogger(__name__)


class Threshold:
    """Threshold value that may be infinite (an explicit tag, not a floating sentinel)."""

    def __init__(self, value: Optional[float]) -> None:
        self.__value = value

    @staticmethod
    def infinite() -> 'Threshold':
        return Threshold(None)

    @property
    def is_infinite(self) -> bool:
        return self.__value is None

    @property
    def value(self) -> float:
        if self.__value is None:
            raise ValueError('threshold is infinite')
        return self.__value

    def exceeded_by(self, q: float) -> bool:
        """True when q lies strictly above the threshold."""
        return self.__value is not None and q > self.__value

    def __eq__(self, o) -> bool:
        return isinstance(o, Threshold) and self.__value == o._Threshold__value

    def __hash__(self) -> int:
        return hash(self.__value)

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "Threshold[{}]".format('+inf' if self.__value is None else repr(self.__value))


class H1Breakdown:
    """Threshold momentum, optimal saving, H1 and its first two p-derivatives.
    Fields are floats for pointwise queries and arrays for vectorized ones; `p0_finite` masks the finite thresholds
    and `dpp_at_threshold` flags evaluations exactly at p0 (where dpp is the right limit)."""

    def __init__(self, p0, p0_finite, s_bar, value, dp, dpp, dpp_at_threshold) -> None:
        self.p0 = p0
        self.p0_finite = p0_finite
        self.s_bar = s_bar
        self.value = value
        self.dp = dp
        self.dpp = dpp
        self.dpp_at_threshold = dpp_at_threshold

    def threshold(self) -> Threshold:
        return Threshold(float(self.p0)) if bool(self.p0_finite) else Threshold.infinite()

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "H1Breakdown[p0={p0}, s_bar={s}, value={v}, dp={dp}, dpp={dpp}]".format(
            p0=self.p0 if np.all(self.p0_finite) else '+inf', s=self.s_bar, v=self.value, dp=self.dp, dpp=self.dpp)


def _pow(base, exponent):
    """base^exponent for positive bases, in log space (safe for tiny bases)."""
    return np.exp(exponent * np.log(base))


# Movement Hamiltonian

def dpH0(p, params: ModelParams):
    """Optimal velocity v* = argmax_{v in K} p v - a(v) (the envelope derivative of H0)."""
    v_lo, v_hi = params.control_box
    out = params.cost_spec.maximizer(p, v_lo, v_hi)
    return out if np.ndim(p) else float(out)


def H0(p, params: ModelParams):
    v = dpH0(p, params)
    out = np.asarray(p, dtype=float) * v - params.cost_spec(v)
    return out if np.ndim(p) else float(out)


# Capital Hamiltonian: vectorized core on local coefficients

def p0_core(A, fh, Fv, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """(p0, finite mask); p0 = (1 - gamma) A^(1 - sigma) f^(eta - 1) F^(gamma (1 - sigma) - 1)"""
    A, fh, Fv = np.broadcast_arrays(np.asarray(A, dtype=float), np.asarray(fh, dtype=float),
                                    np.asarray(Fv, dtype=float))
    finite = (fh > 0.0) & (Fv > 0.0)
    gs = params.gamma * (1.0 - params.sigma)
    safe_f = np.where(finite, fh, 1.0)
    safe_F = np.where(finite, Fv, 1.0)
    p0 = (1.0 - params.gamma) * _pow(A, 1.0 - params.sigma) * _pow(safe_f, params.eta_exp - 1.0) \
        * _pow(safe_F, gs - 1.0)
    return np.where(finite, p0, np.inf), finite


def utility_core(A, fh, Fv, s, params: ModelParams):
    """u_sigma(A ((1 - s) f)^(1 - gamma) F^gamma) = (1 - sigma)^-1 A^(1-sigma) (1-s)^eta f^eta F^(gamma (1-sigma))"""
    A, fh, Fv, s = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (A, fh, Fv, s)))
    positive = (fh > 0.0) & (Fv > 0.0) & (s < 1.0)
    eta = params.eta_exp
    gs = params.gamma * (1.0 - params.sigma)
    one = np.ones_like(A)
    value = _pow(A, 1.0 - params.sigma) * _pow(np.where(positive, 1.0 - s, one), eta) \
        * _pow(np.where(positive, fh, one), eta) * _pow(np.where(positive, Fv, one), gs) / (1.0 - params.sigma)
    return np.where(positive, value, 0.0)


def h1_terms(A, fh, Fv, h, p, params: ModelParams) -> H1Breakdown:
    """Vectorized closed forms. At p = p0 the p <= p0 branch is used (s_bar = 0)."""
    A, fh, Fv, h, p = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (A, fh, Fv, h, p)))
    eta = params.eta_exp
    p0, finite = p0_core(A, fh, Fv, params)
    active = finite & (p > p0)
    safe_p = np.where(active, p, 1.0)
    safe_p0 = np.where(active, p0, 1.0)
    a = fh * Fv
    ratio = np.where(active, _pow(safe_p0 / safe_p, 1.0 / (1.0 - eta)), 1.0)
    s_bar = np.where(active, 1.0 - ratio, 0.0)
    lower_value = utility_core(A, fh, Fv, 0.0, params) - params.zeta * h * p
    upper_value = (a - params.zeta * h) * p + ((1.0 - eta) / eta) * a * ratio * safe_p
    value = np.where(active, upper_value, lower_value)
    dp = -params.zeta * h + np.where(active, a * (1.0 - ratio), 0.0)
    at_threshold = finite & (p == p0)
    reach = active | at_threshold
    safe_q = np.where(reach, p, 1.0)
    safe_q0 = np.where(reach, p0, 1.0)
    dpp = np.where(reach, a * _pow(safe_q0 / safe_q, 1.0 / (1.0 - eta)) / safe_q / (1.0 - eta), 0.0)
    return H1Breakdown(p0, finite, s_bar, value, dp, dpp, at_threshold)


def _local(x, h, mu: EmpiricalMeasure, params: ModelParams):
    return params.A_spec(x), params.f_spec(h), F(x, mu, params)


def _scalar(terms: H1Breakdown) -> H1Breakdown:
    return H1Breakdown(float(terms.p0), bool(terms.p0_finite), float(terms.s_bar), float(terms.value),
                       float(terms.dp), float(terms.dpp), bool(terms.dpp_at_threshold))


def h1_breakdown(x: float, h: float, mu: EmpiricalMeasure, p: float, params: ModelParams) -> H1Breakdown:
    A, fh, Fv = _local(x, h, mu, params)
    return _scalar(h1_terms(A, fh, Fv, h, p, params))


# Capital Hamiltonian: pointwise API

def p0(x: float, h: float, mu: EmpiricalMeasure, params: ModelParams) -> Threshold:
    """Threshold momentum, infinite when h = 0 or M(mu) = 0."""
    A, fh, Fv = _local(x, h, mu, params)
    value, finite = p0_core(A, fh, Fv, params)
    return Threshold(float(value)) if bool(finite) else Threshold.infinite()


def s_bar(x: float, h: float, mu: EmpiricalMeasure, p: float, params: ModelParams) -> float:
    return h1_breakdown(x, h, mu, p, params).s_bar


def H1(x: float, h: float, mu: EmpiricalMeasure, p: float, params: ModelParams) -> float:
    return h1_breakdown(x, h, mu, p, params).value


def dpH1(x: float, h: float, mu: EmpiricalMeasure, p: float, params: ModelParams) -> float:
    return h1_breakdown(x, h, mu, p, params).dp


def dppH1(x: float, h: float, mu: EmpiricalMeasure, p: float, params: ModelParams) -> Tuple[float, bool]:
    """(D2_pp H1, at_threshold); exactly at p0 the right limit is returned with the flag set."""
    terms = h1_breakdown(x, h, mu, p, params)
    return terms.dpp, terms.dpp_at_threshold


def dppH1_bound(x: float, h: float, mu: EmpiricalMeasure, params: ModelParams) -> float:
    """(1-eta)^-1 (1-gamma)^-1 A_lo^(sigma-1) f(h)^(2-eta) F^(2 - gamma (1-sigma))"""
    _, fh, Fv = _local(x, h, mu, params)
    gs = params.gamma * (1.0 - params.sigma)
    return float(params.A_lo ** (params.sigma - 1.0) * fh ** (2.0 - params.eta_exp) * Fv ** (2.0 - gs)
                 / ((1.0 - params.eta_exp) * (1.0 - params.gamma)))


def running_utility(x, h, s, mu: EmpiricalMeasure, params: ModelParams):
    """U_sigma(x, h, s, mu); 0 when h = 0, F = 0 or s = 1."""
    A, fh, Fv = _local(x, h, mu, params)
    out = utility_core(A, fh, Fv, s, params)
    return out if np.ndim(out) else float(out)


GROWTH_ENVELOPE_VARIANTS = ('lipschitz', 'printed')


def growth_envelopes(z: float, params: ModelParams, variant: str = 'lipschitz') -> Tuple[float, float]:
    """(g(z), g1(z)) with |H1| <= g(M)(h p + h^eta) for p >= 0 and |dpH1| <= g1(M) h.

    `variant='lipschitz'` carries L_f and the 1 / (1 - sigma) of the saving-free branch, `variant='printed'`
    is the form without them (valid when f(h) <= h).
    """
    if z < 0:
        raise ValueError('growth envelopes are defined for z >= 0')
    if variant not in GROWTH_ENVELOPE_VARIANTS:
        raise ValueError('unknown variant {!r} (expected one of {})'.format(variant, GROWTH_ENVELOPE_VARIANTS))
    gs = params.gamma * (1.0 - params.sigma)
    eta = params.eta_exp
    top = params.kernel_ratio * z
    if variant == 'printed':
        scale = params.A_hi ** (1.0 - params.sigma) * top ** gs
        g = max(params.zeta, scale, (1.0 - params.gamma) * (1.0 - eta) / eta * scale, top - params.zeta)
        return g, params.zeta + 2.0 * top
    utility_scale = params.A_hi ** (1.0 - params.sigma) * params.L_f ** eta * top ** gs
    g = max(params.zeta,
            utility_scale / (1.0 - params.sigma),
            (1.0 - params.gamma) * (1.0 - eta) / eta * utility_scale,
            params.L_f * top - params.zeta)
    g1 = params.zeta + 2.0 * params.L_f * top
    return g, g1


# Thresholds of the local Lipschitz argument

def capital_threshold(x: float, mu: EmpiricalMeasure, p: float, params: ModelParams) -> Threshold:
    """h0(x, mu, p): p > p0(x, h, mu) iff h > h0. Infinite when p <= 0, M(mu) = 0 or f never reaches the level."""
    Fv = F(x, mu, params)
    if p <= 0.0 or Fv == 0.0:
        return Threshold.infinite()
    gs = params.gamma * (1.0 - params.sigma)
    level = ((1.0 - params.gamma) / p * float(params.A_spec(x)) ** (1.0 - params.sigma) * Fv ** (gs - 1.0)) \
        ** (1.0 / (1.0 - params.eta_exp))
    h0 = float(params.f_spec.inverse(level))
    return Threshold(h0) if math.isfinite(h0) else Threshold.infinite()


def interaction_threshold(x: float, h: float, p: float, params: ModelParams) -> Threshold:
    """F0(x, h, p): p > p0(x, h, mu) iff F(x, mu) > F0. Infinite when p <= 0 or h = 0."""
    fh = float(params.f_spec(h))
    if p <= 0.0 or fh == 0.0:
        return Threshold.infinite()
    gs = params.gamma * (1.0 - params.sigma)
    base = p / (1.0 - params.gamma) * float(params.A_spec(x)) ** (params.sigma - 1.0) * fh ** (1.0 - params.eta_exp)
    return Threshold(base ** (1.0 / (gs - 1.0)))


def G0(h: float, params: ModelParams) -> float:
    """G0(h) = f(h)^(1 - eta) / (1 - gamma), equal to A^(1-sigma) F^(gamma(1-sigma)-1) at p = p0."""
    return float(params.f_spec(h)) ** (1.0 - params.eta_exp) / (1.0 - params.gamma)


# Local Lipschitz probe of dpH1

class LipschitzProbeReport:
    def __init__(self, region_N: float, samples: int, max_ratio: float, ceiling: float,
                 constants: Dict[str, float], witness: Optional[Dict[str, float]]) -> None:
        self.region_N = region_N
        self.samples = samples
        self.max_ratio = max_ratio
        self.ceiling = ceiling
        self.constants = constants
        self.witness = witness

    @property
    def ok(self) -> bool:
        return self.max_ratio <= self.ceiling

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "{name}[N={N}, samples={s}, max_ratio={r:.6g}, ceiling={c:.6g}]".format(
            name=self.__class__.__name__, N=self.region_N, s=self.samples, r=self.max_ratio, c=self.ceiling)


def lipschitz_constants(region_N: float, params: ModelParams) -> Dict[str, float]:
    """Per-direction moduli of dpH1 on {1/N < M <= M2^(1/2) < N, h < N}: M is replaced by 1/N under
    negative exponents and by N otherwise, h and M2^(1/2) by N."""
    N = float(region_N)
    gamma, sigma, eta = params.gamma, params.sigma, params.eta_exp
    gs = gamma * (1.0 - sigma)
    alpha = (1.0 - gs) / (1.0 - eta)
    beta = (1.0 - sigma) / (1.0 - eta)
    ratio = params.kernel_ratio
    th, Th = params.theta_lo, params.theta_hi
    L_f, L_A, L_eta = params.L_f, params.L_A, params.L_eta
    A_lo, A_hi = params.A_lo, params.A_hi
    f_mu_lipschitz = Th / th ** 2 * (N * (params.L_eta1 + params.L_eta2) + Th)
    f_x_lipschitz = 2.0 * L_eta * Th / th ** 2 * N
    A_beta_slope = beta * max(A_hi ** (beta - 1.0), A_lo ** (beta - 1.0)) * L_A
    # bound on (1-gamma)^(1/(1-eta)) p^(-1/(1-eta)) above the threshold
    k_bound = L_f * N * A_lo ** (-beta) * (ratio * N) ** alpha
    F_power_bound = (ratio * N) ** (1.0 - alpha) if alpha <= 1.0 else (N / ratio) ** (alpha - 1.0)
    return {
        'p': (L_f * N) ** (2.0 - eta) * (ratio * N) ** (2.0 - gs) * A_lo ** (sigma - 1.0)
        / ((1.0 - eta) * (1.0 - gamma)),
        'h': params.zeta + ratio * N * L_f,
        'mu_direct': max(1.0, alpha) * L_f * N * f_mu_lipschitz,
        'mu_above': L_f * N * f_mu_lipschitz * (1.0 + abs(1.0 - alpha) * (ratio ** 2 * N * N) ** alpha),
        'mu_crossing': (ratio * N) ** (1.0 + alpha) * L_f * N * (1.0 - gs) * (ratio * N) ** (2.0 - gs)
        * f_mu_lipschitz,
        'x_direct': L_f * N * (max(1.0, alpha) * f_x_lipschitz + beta * ratio * N * L_A / A_lo),
        'x_above': L_f * N * f_x_lipschitz + k_bound * (
            F_power_bound * A_beta_slope + A_hi ** beta * abs(1.0 - alpha) * (ratio * N) ** alpha * f_x_lipschitz),
        'x_crossing': L_f * N * ratio ** (1.0 + 2.0 * alpha) * N * A_lo ** (-beta) * (
            A_beta_slope + A_hi ** beta * alpha * 2.0 * L_eta * Th ** 2 / th ** 3),
    }


def _random_region_measure(generator: np.random.Generator, N: float) -> EmpiricalMeasure:
    while True:
        atoms = int(generator.integers(1, 9))
        x = generator.uniform(-3.0, 3.0, atoms)
        h = generator.exponential(generator.uniform(1.0 / N, N / 2.0), atoms)
        mu = EmpiricalMeasure.uniform(x, h)
        if 1.0 / N < moment_M(mu) and math.sqrt(moment_M2(mu)) < N:
            return mu


def dpH1_lipschitz_probe(region_N: float, params: ModelParams, n_samples: int = 10000, seed: int = 0,
                         increments: str = 'all') -> LipschitzProbeReport:
    """Samples pairs of tuples inside the region and reports the largest
    |dpH1(1) - dpH1(2)| / (|dx| + |dh| + W1(mu1, mu2) + |dp|) against the ceiling.

    Measure increments are rigid translations of all atoms, for which W1 and W2 coincide.
    `increments='p'` varies the momentum only (ceiling: the D2_pp bound).
    """
    if region_N < 1:
        raise ValueError('region N must be >= 1')
    if increments not in ('all', 'p'):
        raise ValueError('increments must be one of all, p')
    N = float(region_N)
    generator = rng.generator(seed, 'hamiltonian/lipschitz-probe')
    constants = lipschitz_constants(N, params)
    ceiling = constants['p'] if increments == 'p' else max(constants.values())
    best, witness = 0.0, None
    accepted = 0
    while accepted < n_samples:
        mu1 = _random_region_measure(generator, N)
        x1 = generator.uniform(-3.0, 3.0)
        h1 = generator.uniform(0.0, N)
        p1 = generator.uniform(-0.5, 3.0)
        scale = 10.0 ** generator.uniform(-3.0, 0.0)
        dp = scale * generator.normal()
        if increments == 'p':
            dx, dh, cx, ch = 0.0, 0.0, 0.0, 0.0
        else:
            dx, dh, cx = scale * generator.normal(3)
            ch = max(scale * generator.normal(), -float(mu1.h.min()))
        x2, h2, p2 = x1 + dx, h1 + dh, p1 + dp
        if not 0.0 <= h2 < N:
            continue
        mu2 = EmpiricalMeasure(mu1.x + cx, mu1.h + ch, mu1.w)
        if not (1.0 / N < moment_M(mu2) and math.sqrt(moment_M2(mu2)) < N):
            continue
        accepted += 1
        denominator = abs(dx) + abs(dh) + math.hypot(cx, ch) + abs(dp)
        if denominator == 0.0:
            continue
        change = abs(dpH1(x1, h1, mu1, p1, params) - dpH1(x2, h2, mu2, p2, params))
        ratio = change / denominator
        if ratio > best:
            best = ratio
            witness = {'x1': x1, 'h1': h1, 'p1': p1, 'dx': dx, 'dh': dh, 'dp': dp, 'shift_x': cx, 'shift_h': ch}
    logger.debug('lipschitz probe N=%s: max ratio %s against ceiling %s', N, best, ceiling)
    return LipschitzProbeReport(N, n_samples, best, ceiling, constants, witness)
