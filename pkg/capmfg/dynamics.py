"""
[API] Sample-path simulation of the controlled state equation and of the interacting particle
system approximating the McKean-Vlasov dynamics, with the horizon constants and moment bounds
that keep the fixed-point construction well posed.

Capital is stepped in the log variable y = log h, so unmasked atoms stay strictly positive and
atoms started at zero capital (the mask) stay at zero forever.
"""

import logging
import math
from abc import ABCMeta, abstractmethod
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from capmfg import rng
from capmfg.exceptions import NonFiniteStateException, MeasureInvariantException
from capmfg.hamiltonian import dpH0, h1_terms, utility_core
from capmfg.interaction import F, interaction_sweep, sweep_nodes, measure_perturbation_constant
from capmfg.measures import EmpiricalMeasure, MeasureFlow, moment_M, moment_M2, moment_P2, flow_distance
from capmfg.params import ModelParams, NumericsParams

logger = logging.getLogger(__name__)

CONFIDENCE_Z = 3.0
K1_HEADROOM = 0.1


class ParticleEnsemble:
    """Positions x, log-capitals y and the zero-capital mask of N equally weighted particles."""

    def __init__(self, x: np.ndarray, y: np.ndarray, mask: np.ndarray, time: float = 0.0,
                 h: Optional[np.ndarray] = None) -> None:
        self.x = np.array(x, dtype=float)
        self.y = np.array(y, dtype=float)
        self.mask = np.array(mask, dtype=bool)
        self.time = time
        # initial capitals verbatim, not exp(log h)
        self.__h = None if h is None else np.array(h, dtype=float)

    @staticmethod
    def from_measure(mu: EmpiricalMeasure, time: float = 0.0) -> 'ParticleEnsemble':
        if not mu.is_uniform():
            raise MeasureInvariantException('particle ensembles need equally weighted atoms')
        mask = mu.h == 0.0
        y = np.log(np.where(mask, 1.0, mu.h))
        return ParticleEnsemble(mu.x, np.where(mask, 0.0, y), mask, time, mu.h)

    @property
    def h(self) -> np.ndarray:
        if self.__h is not None:
            return self.__h
        return np.where(self.mask, 0.0, np.exp(self.y))

    def measure(self) -> EmpiricalMeasure:
        return EmpiricalMeasure.uniform(self.x, self.h)

    def __len__(self) -> int:
        return len(self.x)

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "{name}[particles={n}, masked={m}, time={t:.6g}]".format(
            name=self.__class__.__name__, n=len(self), m=int(self.mask.sum()), t=self.time)


class PathBundle:
    """Per-path time series on a uniform grid: states (x, h) and the controls (v, s) applied from each time."""

    def __init__(self, times: np.ndarray, x: np.ndarray, h: np.ndarray, v: np.ndarray, s: np.ndarray,
                 label: str, seed: int) -> None:
        self.times = times
        self.x = x
        self.h = h
        self.v = v
        self.s = s
        self.label = label
        self.seed = seed

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "{name}[paths={p}, times={t}, label={l}]".format(name=self.__class__.__name__, p=self.n_paths,
                                                               t=len(self.times), l=self.label)


class Policy(metaclass=ABCMeta):
    """Control rule (t, x, h) -> (v, s) with v in K and s in [0, 1]."""

    @abstractmethod
    def controls(self, time_index: int, t: float, x: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError()


class ConstantPolicy(Policy):
    def __init__(self, v: float, s: float) -> None:
        self.v = float(v)
        self.s = float(s)

    def controls(self, time_index: int, t: float, x: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return np.full(len(x), self.v), np.full(len(x), self.s)

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "ConstantPolicy[v={v}, s={s}]".format(v=self.v, s=self.s)


class PiecewiseConstantPolicy(Policy):
    """Open-loop controls switching at `breakpoints` (values[k] applies from breakpoints[k])."""

    def __init__(self, breakpoints: Sequence[float], v_values: Sequence[float], s_values: Sequence[float]) -> None:
        if not (len(breakpoints) == len(v_values) == len(s_values)) or len(breakpoints) == 0:
            raise ValueError('piecewise policy needs one (v, s) pair per breakpoint')
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.v_values = np.asarray(v_values, dtype=float)
        self.s_values = np.asarray(s_values, dtype=float)

    def controls(self, time_index: int, t: float, x: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        k = max(int(np.searchsorted(self.breakpoints, t + 1e-12, side='right')) - 1, 0)
        return np.full(len(x), self.v_values[k]), np.full(len(x), self.s_values[k])

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "PiecewiseConstantPolicy[pieces={n}]".format(n=len(self.breakpoints))


class GradientField(metaclass=ABCMeta):
    """Source of (D_x V, D_h V) at grid times, as consumed by the particle drift."""

    @abstractmethod
    def grid_gradients(self, time_index: int, x: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int]:
        """Gradients at positive-capital query points and the number of queries clamped onto the grid."""
        raise NotImplementedError()


def _check_controls(v: np.ndarray, s: np.ndarray, params: ModelParams) -> None:
    v_lo, v_hi = params.control_box
    if np.any(v < v_lo - 1e-12) or np.any(v > v_hi + 1e-12):
        raise ValueError('policy velocity outside the control set [{}, {}]'.format(v_lo, v_hi))
    if np.any(s < -1e-12) or np.any(s > 1.0 + 1e-12):
        raise ValueError('policy saving fraction outside [0, 1]')


def _f_over_h(h: np.ndarray, params: ModelParams) -> np.ndarray:
    positive = h > 0.0
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.where(positive, params.f_spec(h) / np.where(positive, h, 1.0), params.L_f)


def _log_step(x, y, mask, v, growth, step, dt, params: ModelParams, seed: int, label: str):
    """One Euler step in (x, y): growth is the relative capital drift dh / h."""
    n = len(x)
    sqrt_dt = math.sqrt(dt)
    noise_x = rng.normals(seed, label, step, 0, n)
    noise_y = rng.normals(seed, label, step, 1, n)
    x_next = x + v * dt + params.eps * sqrt_dt * noise_x
    y_next = y + (growth - 0.5 * params.chi ** 2) * dt + params.chi * sqrt_dt * noise_y
    y_next = np.where(mask, 0.0, y_next)
    bad = ~np.isfinite(x_next) | ~np.isfinite(y_next)
    if np.any(bad):
        raise NonFiniteStateException('non-finite particle state', step=step, atoms=np.flatnonzero(bad).tolist())
    return x_next, y_next


def simulate_controlled(x0, h0, policy: Policy, mu_flow: MeasureFlow, params: ModelParams,
                        numerics: NumericsParams, label: str = 'dynamics/controlled', n_paths: Optional[int] = None,
                        start_index: int = 0, seed: Optional[int] = None) -> PathBundle:
    """Euler-Maruyama in x, log-domain Euler in h along the grid of `mu_flow` from `start_index` to T.

    `x0`, `h0` are scalars (fixed initial point, `n_paths` or `numerics.mc_paths` copies) or arrays.
    F along paths is read from piecewise-linear sweeps of each F(., mu(t_n)).
    """
    seed = numerics.seed if seed is None else seed
    if np.ndim(x0) == 0 and np.ndim(h0) == 0:
        count = n_paths or numerics.mc_paths
        x = np.full(count, float(x0))
        h_init = np.full(count, float(h0))
    else:
        x, h_init = np.broadcast_arrays(np.asarray(x0, dtype=float), np.asarray(h0, dtype=float))
        x, h_init = x.copy(), h_init.copy()
    if np.any(h_init < 0.0):
        raise MeasureInvariantException('initial capital must be nonnegative')
    mask = h_init == 0.0
    y = np.where(mask, 0.0, np.log(np.where(mask, 1.0, h_init)))
    times = mu_flow.times[start_index:]
    steps = len(times) - 1
    xs = np.empty((len(x), steps + 1))
    hs = np.empty((len(x), steps + 1))
    vs = np.empty((len(x), steps + 1))
    ss = np.empty((len(x), steps + 1))
    for n in range(steps + 1):
        index = start_index + n
        h = np.where(mask, 0.0, np.exp(y))
        v, s = policy.controls(index, float(times[n]), x, h)
        _check_controls(v, s, params)
        xs[:, n], hs[:, n], vs[:, n], ss[:, n] = x, h, v, s
        if n == steps:
            break
        mu = mu_flow.at(index)
        sweep = interaction_sweep(mu, params, sweep_nodes(mu, numerics.x_min, numerics.x_max))
        growth = s * _f_over_h(h, params) * sweep(x) - params.zeta
        x, y = _log_step(x, y, mask, v, growth, index, float(times[n + 1] - times[n]), params, seed, label)
    return PathBundle(np.array(times), xs, hs, vs, ss, label, seed)


class MkvDiagnostics:
    def __init__(self) -> None:
        self.clamped_queries = 0
        self.steps = 0

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "MkvDiagnostics[steps={s}, clamped_queries={c}]".format(s=self.steps, c=self.clamped_queries)


def mkv_drifts(x: np.ndarray, h: np.ndarray, mu: EmpiricalMeasure, gradients: GradientField, time_index: int,
               params: ModelParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """(velocity, relative capital drift dpH1 / h, capital drift dpH1, clamped count) at the particles,
    with F taken from the measure `mu` by exact kernel sums."""
    positive = h > 0.0
    dxv = np.zeros(len(x))
    dhv = np.zeros(len(x))
    clamped = 0
    if np.any(positive):
        dxv_p, dhv_p, clamped = gradients.grid_gradients(time_index, x[positive], h[positive])
        dxv[positive], dhv[positive] = dxv_p, dhv_p
    masked = ~positive
    if np.any(masked):
        # D_xV vanishes on the zero-capital boundary
        dxv[masked] = 0.0
    velocity = dpH0(dxv, params)
    Fv = F(x, mu, params)
    terms = h1_terms(params.A_spec(x), params.f_spec(h), Fv, h, dhv, params)
    relative = terms.s_bar * _f_over_h(h, params) * Fv - params.zeta
    return velocity, np.where(positive, relative, 0.0), terms.dp, clamped


def simulate_mkv_with_diagnostics(ensemble0: ParticleEnsemble, value: GradientField, params: ModelParams,
                                  numerics: NumericsParams, times: Optional[np.ndarray] = None,
                                  label: str = 'dynamics/mkv') -> Tuple[MeasureFlow, MkvDiagnostics]:
    if times is None:
        times = MeasureFlow.uniform_grid(params.horizon, numerics.n_time)
    x, y, mask = ensemble0.x.copy(), ensemble0.y.copy(), ensemble0.mask.copy()
    diagnostics = MkvDiagnostics()
    measures = []  # type: List[EmpiricalMeasure]
    for n in range(len(times)):
        h = ensemble0.h if n == 0 else np.where(mask, 0.0, np.exp(y))
        mu = EmpiricalMeasure.uniform(x, h)
        measures.append(mu)
        if n == len(times) - 1:
            break
        velocity, relative, _, clamped = mkv_drifts(x, h, mu, value, n, params)
        diagnostics.clamped_queries += clamped
        if not (np.all(np.isfinite(velocity)) and np.all(np.isfinite(relative))):
            bad = ~np.isfinite(velocity) | ~np.isfinite(relative)
            raise NonFiniteStateException('non-finite drift', step=n, atoms=np.flatnonzero(bad).tolist())
        x, y = _log_step(x, y, mask, velocity, relative, n, float(times[n + 1] - times[n]), params, numerics.seed,
                         label)
        diagnostics.steps += 1
    if diagnostics.clamped_queries:
        logger.warning('%s gradient queries fell outside the value grid and were clamped',
                       diagnostics.clamped_queries)
    return MeasureFlow(times, measures), diagnostics


def simulate_mkv(ensemble0: ParticleEnsemble, value: GradientField, params: ModelParams,
                 numerics: NumericsParams) -> MeasureFlow:
    """Interacting particle system: every particle feels the feedback drifts read off the value field,
    with F taken from the ensemble's own empirical measure at the same step."""
    flow, _ = simulate_mkv_with_diagnostics(ensemble0, value, params, numerics)
    return flow


# Weak form of the Fokker-Planck equation

class TestFunction(metaclass=ABCMeta):
    """Smooth test function phi(t, x, h) with the derivatives entering the weak form."""

    @abstractmethod
    def evaluate(self, t: float, x: np.ndarray, h: np.ndarray) -> Dict[str, np.ndarray]:
        """Returns keys value, dt, dx, dxx, dh, dhh."""
        raise NotImplementedError()


class ConstantTestFunction(TestFunction):
    def __init__(self, c: float = 1.0) -> None:
        self.c = float(c)

    def evaluate(self, t: float, x: np.ndarray, h: np.ndarray) -> Dict[str, np.ndarray]:
        zero = np.zeros(len(x))
        return {'value': np.full(len(x), self.c), 'dt': zero, 'dx': zero, 'dxx': zero, 'dh': zero, 'dhh': zero}

    def __repr__(self) -> str:
        return "ConstantTestFunction[c={}]".format(self.c)


def _bump(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(1 - u^2)^3 on |u| < 1 and its first two derivatives (C^2, compact support)."""
    inside = np.abs(u) < 1.0
    q = np.where(inside, 1.0 - u * u, 0.0)
    value = q ** 3
    first = -6.0 * u * q ** 2
    second = -6.0 * q ** 2 + 24.0 * u * u * q
    return np.where(inside, value, 0.0), np.where(inside, first, 0.0), np.where(inside, second, 0.0)


class BumpTestFunction(TestFunction):
    """psi(t) beta((x - x_center) / x_radius) beta((h - h_center) / h_radius) with beta(u) = (1 - u^2)^3;
    psi is 1 unless a time window is given, then a bump in time as well."""

    def __init__(self, x_center: float, x_radius: float, h_center: float, h_radius: float,
                 t_center: Optional[float] = None, t_radius: Optional[float] = None) -> None:
        self.x_center, self.x_radius = float(x_center), float(x_radius)
        self.h_center, self.h_radius = float(h_center), float(h_radius)
        self.t_center, self.t_radius = t_center, t_radius

    def evaluate(self, t: float, x: np.ndarray, h: np.ndarray) -> Dict[str, np.ndarray]:
        bx, bx1, bx2 = _bump((x - self.x_center) / self.x_radius)
        bh, bh1, bh2 = _bump((h - self.h_center) / self.h_radius)
        if self.t_center is None:
            psi, psi1 = 1.0, 0.0
        else:
            a, a1, _ = _bump(np.array([(t - self.t_center) / self.t_radius]))
            psi, psi1 = float(a[0]), float(a1[0]) / self.t_radius
        return {
            'value': psi * bx * bh,
            'dt': psi1 * bx * bh,
            'dx': psi * bx1 / self.x_radius * bh,
            'dxx': psi * bx2 / self.x_radius ** 2 * bh,
            'dh': psi * bx * bh1 / self.h_radius,
            'dhh': psi * bx * bh2 / self.h_radius ** 2,
        }

    def __repr__(self) -> str:
        return "BumpTestFunction[x=({}, {}), h=({}, {}), t=({}, {})]".format(
            self.x_center, self.x_radius, self.h_center, self.h_radius, self.t_center, self.t_radius)


def default_test_functions(horizon: float) -> List[TestFunction]:
    return [
        ConstantTestFunction(1.0),
        BumpTestFunction(0.0, 1.5, 1.0, 0.8),
        BumpTestFunction(-0.5, 1.5, 1.2, 1.0),
        BumpTestFunction(0.5, 1.5, 0.9, 0.7, t_center=0.5 * horizon, t_radius=0.5 * horizon),
    ]


def fp_weak_residual(flow: MeasureFlow, value: GradientField, params: ModelParams,
                     test_fns: Optional[Sequence[TestFunction]] = None) -> List[float]:
    """|<phi(T), mu(T)> - <phi(0), mu(0)> - int_0^T <generator phi, mu(t)> dt| per test function,
    trapezoidal in time and particle sums in space."""
    if test_fns is None:
        test_fns = default_test_functions(flow.horizon)
    integrands = np.zeros((len(test_fns), len(flow)))
    boundaries = np.zeros((len(test_fns), 2))
    for n, mu in enumerate(flow.measures):
        t = float(flow.times[n])
        velocity, _, capital_drift, _ = mkv_drifts(mu.x, mu.h, mu, value, n, params)
        for k, phi in enumerate(test_fns):
            d = phi.evaluate(t, mu.x, mu.h)
            generator = d['dt'] + 0.5 * params.eps ** 2 * d['dxx'] + 0.5 * params.chi ** 2 * mu.h ** 2 * d['dhh'] \
                + velocity * d['dx'] + capital_drift * d['dh']
            integrands[k, n] = math.fsum(mu.w * generator)
            if n == 0:
                boundaries[k, 0] = math.fsum(mu.w * d['value'])
            if n == len(flow) - 1:
                boundaries[k, 1] = math.fsum(mu.w * d['value'])
    residuals = []
    for k in range(len(test_fns)):
        integral = float(trapezoid(integrands[k], flow.times)) if len(flow) > 1 else 0.0
        residuals.append(abs(boundaries[k, 1] - boundaries[k, 0] - integral))
    return residuals


# Horizon constants and moment bounds

def B0(p: float) -> float:
    """Burkholder-Davis-Gundy constant (p^3 / (2p - 2))^(p/2)."""
    return (p ** 3 / (2.0 * p - 2.0)) ** (p / 2.0)


def c_constants(T: float, m_bar: float, params: ModelParams, p: float = 2) -> Dict[str, float]:
    """C_{1,p} = (4T)^(p-1) ((Theta/theta) M_bar)^p and
    C_{2,p} = C_{1,p} L_f^p + (4T)^(p-1) zeta^p + 4^(p-1) B_{0,p} chi^p T^((p-2)/2)."""
    c1 = (4.0 * T) ** (p - 1.0) * (params.kernel_ratio * m_bar) ** p
    c2 = c1 * params.L_f ** p + (4.0 * T) ** (p - 1.0) * params.zeta ** p \
        + 4.0 ** (p - 1.0) * B0(p) * params.chi ** p * T ** ((p - 2.0) / 2.0)
    return {'B0': B0(p), 'C1': c1, 'C2': c2}


def k1_floor(mu0: EmpiricalMeasure, params: ModelParams) -> float:
    """Right side of the K1 condition: 3 E[x0^2 + h0^2] + 3 B_bar^2 + 12 eps."""
    return 3.0 * moment_P2(mu0) + 3.0 * params.B_bar ** 2 + 12.0 * params.eps


def t_max_formula(K1: float, second_moment_h: float, params: ModelParams) -> float:
    """Right end of the admissible horizon interval for a given K1 (+inf when E[h0^2] = 0)."""
    if second_moment_h == 0.0:
        return math.inf
    c = params.zeta + 2.0 * params.kernel_ratio * math.sqrt(2.0 * K1)
    log_term = math.log(K1 / (3.0 * second_moment_h))
    chi2 = params.chi ** 2
    root = math.sqrt(max(144.0 * chi2 ** 2 + 48.0 * c * c * log_term, 0.0))
    return max((root - 12.0 * chi2) / (24.0 * c * c), 0.0)


def k2_formula(K1: float, T: float, params: ModelParams) -> float:
    drift = params.zeta + params.kernel_ratio * math.sqrt(2.0 * K1)
    return math.sqrt(4.0 * T * (params.B_bar ** 2 + drift ** 2 * K1) + 2.0 * params.eps ** 2
                     + 8.0 * params.chi ** 2 * K1)


class HorizonConstants:
    def __init__(self, K1: float, K1_floor: float, K2: float, T_max: float, T_eval: float,
                 C12: float, C22: float, C24: float, B0_table: Dict[int, float], second_moment_h: float,
                 second_moment: float) -> None:
        self.K1 = K1
        self.K1_floor = K1_floor
        self.K2 = K2
        self.T_max = T_max
        self.T_eval = T_eval
        self.C12 = C12
        self.C22 = C22
        self.C24 = C24
        self.B0_table = B0_table
        self.second_moment_h = second_moment_h
        self.second_moment = second_moment

    @property
    def t_max_infinite(self) -> bool:
        return math.isinf(self.T_max)

    def as_dict(self) -> Dict[str, object]:
        return {'K1': self.K1, 'K1_floor': self.K1_floor, 'K2': self.K2,
                'T_max': 'inf' if self.t_max_infinite else self.T_max, 'T_eval': self.T_eval,
                'C12': self.C12, 'C22': self.C22, 'C24': self.C24,
                'B0': {str(k): v for k, v in self.B0_table.items()},
                'E_h0_squared': self.second_moment_h, 'E_P2_0': self.second_moment}

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "{name}[{fields}]".format(name=self.__class__.__name__, fields=self.as_dict())


def horizon_constants(mu0: EmpiricalMeasure, params: ModelParams, headroom: float = K1_HEADROOM) -> HorizonConstants:
    """K1 (floor plus headroom), T_max at that K1, and K2 and the C constants at T_max
    (at the configured horizon when T_max is infinite), with M_bar = sqrt(2 K1)."""
    floor = k1_floor(mu0, params)
    K1 = (1.0 + headroom) * floor
    second_h = moment_M2(mu0)
    t_max = t_max_formula(K1, second_h, params)
    T = params.horizon if math.isinf(t_max) else t_max
    m_bar = math.sqrt(2.0 * K1)
    constants = HorizonConstants(
        K1=K1, K1_floor=floor, K2=k2_formula(K1, T, params), T_max=t_max, T_eval=T,
        C12=c_constants(T, m_bar, params, 2)['C1'], C22=c_constants(T, m_bar, params, 2)['C2'],
        C24=c_constants(T, m_bar, params, 4)['C2'], B0_table={2: B0(2), 4: B0(4)},
        second_moment_h=second_h, second_moment=moment_P2(mu0))
    logger.debug('horizon constants: %s', constants)
    return constants


def x_moment_bound(t: float, mu0: EmpiricalMeasure, params: ModelParams, t0: float = 0.0) -> float:
    """E sup_{s <= t} |x(s)|^2 <= 3 E|x0|^2 + 3 (max K)^2 (t - t0)^2 + eps^2 B_{0,2} (t - t0)"""
    elapsed = t - t0
    second_x = math.fsum(mu0.w * mu0.x * mu0.x)
    return 3.0 * second_x + 3.0 * params.B_bar ** 2 * elapsed ** 2 + params.eps ** 2 * B0(2) * elapsed


def increment_bound(s: float, t: float, K1: float, params: ModelParams) -> Tuple[float, float]:
    """Bounds of E|x(t) - x(s)|^2 and E|h(t) - h(s)|^2 for flows whose capital moment stays below K1."""
    lag = abs(t - s)
    x_bound = 2.0 * params.B_bar ** 2 * lag ** 2 + 2.0 * params.eps ** 2 * lag
    drift = params.zeta + params.kernel_ratio * math.sqrt(2.0 * K1)
    h_bound = (2.0 * lag ** 2 * drift ** 2 + 8.0 * params.chi ** 2 * lag) * K1
    return x_bound, h_bound


def _paths(data) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(data, PathBundle):
        return data.times, data.x, data.h
    if isinstance(data, MeasureFlow):
        if not data.is_path_aligned():
            raise MeasureInvariantException('moment checks need a path-aligned flow')
        return data.times, np.stack([m.x for m in data.measures], axis=1), \
            np.stack([m.h for m in data.measures], axis=1)
    raise TypeError('expected PathBundle or MeasureFlow, got {}'.format(type(data).__name__))


def _mean_and_error(samples: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mean = samples.mean(axis=0)
    if samples.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])


def moment_bound_check(data, params: ModelParams, mu_flow: Optional[MeasureFlow] = None,
                       z: float = CONFIDENCE_Z) -> Dict[str, object]:
    """Empirical E sup h^2, E h(t) and E sup |x|^2 against their bounds, allowing `z` standard errors.

    C_{2,2} uses M_bar = sup_t M(mu(t)) of the flow driving the dynamics (`mu_flow`, or the data itself).
    """
    times, x, h = _paths(data)
    if mu_flow is None:
        mu_flow = data if isinstance(data, MeasureFlow) else None
    t0 = float(times[0])
    T = float(times[-1]) - t0
    m_bar = max(moment_M(m) for m in mu_flow.measures) if mu_flow is not None else float(np.max(h.mean(axis=0)))
    c22 = c_constants(T, m_bar, params, 2)['C2']
    second_h0 = float(np.mean(h[:, 0] ** 2))
    elapsed = times - t0
    sup_h2_mean, sup_h2_error = _mean_and_error(np.maximum.accumulate(h ** 2, axis=1))
    mean_h, mean_h_error = _mean_and_error(h)
    sup_x2_mean, sup_x2_error = _mean_and_error(np.maximum.accumulate(x ** 2, axis=1))
    sup_h2_bound = 4.0 * np.exp(c22 * elapsed) * second_h0
    mean_h_bound = np.full(len(times), 2.0 * math.exp(c22 * T / 2.0) * math.sqrt(second_h0))
    x0_measure = EmpiricalMeasure.uniform(x[:, 0], h[:, 0])
    sup_x2_bound = np.array([x_moment_bound(float(t), x0_measure, params, t0) for t in times])
    sup_h2_slack = sup_h2_bound - (sup_h2_mean - z * sup_h2_error)
    mean_h_slack = mean_h_bound - (mean_h - z * mean_h_error)
    sup_x2_slack = sup_x2_bound - (sup_x2_mean - z * sup_x2_error)
    return {
        't': times, 'C22': c22, 'M_bar': m_bar,
        'sup_h2_mean': sup_h2_mean, 'sup_h2_bound': sup_h2_bound, 'sup_h2_slack': sup_h2_slack,
        'mean_h': mean_h, 'mean_h_bound': mean_h_bound, 'mean_h_slack': mean_h_slack,
        'sup_x2_mean': sup_x2_mean, 'sup_x2_bound': sup_x2_bound, 'sup_x2_slack': sup_x2_slack,
        'min_slack': float(min(sup_h2_slack.min(), mean_h_slack.min(), sup_x2_slack.min())),
        'ok': bool(np.all(sup_h2_slack >= 0) and np.all(mean_h_slack >= 0) and np.all(sup_x2_slack >= 0)),
    }


def perturbation_check(mu_flow: MeasureFlow, nu_flow: MeasureFlow, mu0: EmpiricalMeasure, policy: Policy,
                       params: ModelParams, numerics: NumericsParams, z: float = CONFIDENCE_Z) -> Dict[str, object]:
    """Two controlled simulations from mu0 sharing noise and control, one along each flow:
    E sup |h_mu - h_nu|^2 against C(mu, nu, mu0, T) d_{inf,2}(mu, nu)^2."""
    bundle_mu = simulate_controlled(mu0.x, mu0.h, policy, mu_flow, params, numerics, label='dynamics/perturbation')
    bundle_nu = simulate_controlled(mu0.x, mu0.h, policy, nu_flow, params, numerics, label='dynamics/perturbation')
    gap, gap_error = _mean_and_error(np.max((bundle_mu.h - bundle_nu.h) ** 2, axis=1)[:, None])
    distance = flow_distance(mu_flow, nu_flow, numerics.ot_cap, numerics.seed, numerics.threads)
    constant = measure_perturbation_constant(mu_flow, nu_flow, mu0, params, 'sum')
    bound = constant * distance ** 2
    return {'sup_gap_mean': float(gap[0]), 'sup_gap_error': float(gap_error[0]), 'distance': distance,
            'constant': constant, 'bound': bound, 'ok': bool(gap[0] - z * gap_error[0] <= bound)}


def running_payoff(bundle: PathBundle, mu_flow: MeasureFlow, params: ModelParams, numerics: NumericsParams,
                   start_index: int = 0) -> np.ndarray:
    """Per-path discounted payoff int e^{-rho (t - t0)} (U_sigma - a(v)) dt by the trapezoid rule."""
    t0 = float(bundle.times[0])
    rates = np.empty_like(bundle.x)
    for n in range(len(bundle.times)):
        mu = mu_flow.at(start_index + n)
        sweep = interaction_sweep(mu, params, sweep_nodes(mu, numerics.x_min, numerics.x_max))
        x, h = bundle.x[:, n], bundle.h[:, n]
        utility = utility_core(params.A_spec(x), params.f_spec(h), sweep(x), bundle.s[:, n], params)
        discount = math.exp(-params.rho * (float(bundle.times[n]) - t0))
        rates[:, n] = discount * (utility - params.cost_spec(bundle.v[:, n]))
    if len(bundle.times) < 2:
        return np.zeros(bundle.n_paths)
    return trapezoid(rates, bundle.times, axis=1)
