"""
[API] The nonlocal interaction functional

    F(x, mu) = <<mu, b1>>(x) / <<mu, b2>>(x),   b1 = eta1(|x - y|) k,  b2 = eta2(|x - y|),

its kernel brackets, bounds and Lipschitz moduli.
"""

import logging
import math
from typing import Dict

import numpy as np

from capmfg.measures import EmpiricalMeasure, MeasureFlow, moment_M, moment_M2, moment_P2
from capmfg.memo import memoize, DefaultInMemoryMemoConfiguration
from capmfg.params import ModelParams

logger = logging.getLogger(__name__)

_CHUNK = 256


def _bracket(mu: EmpiricalMeasure, xs: np.ndarray, kernel, mass: np.ndarray) -> np.ndarray:
    out = np.empty(len(xs))
    for start in range(0, len(xs), _CHUNK):
        block = xs[start:start + _CHUNK]
        weights = kernel(np.abs(block[:, None] - mu.x[None, :]))
        # contiguous row reduction: numpy's pairwise summation in fixed atom order
        out[start:start + _CHUNK] = np.sum(weights * mass[None, :], axis=1)
    return out


def bracket_b1(mu: EmpiricalMeasure, x, params: ModelParams):
    """sum_i w_i eta1(|x - x_i|) h_i (scalar in, scalar out; array in, array out)"""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = _bracket(mu, xs, params.kernel1, mu.w * mu.h)
    return out if np.ndim(x) else float(out[0])


def bracket_b2(mu: EmpiricalMeasure, x, params: ModelParams):
    """sum_i w_i eta2(|x - x_i|)"""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = _bracket(mu, xs, params.kernel2, mu.w)
    return out if np.ndim(x) else float(out[0])


def F(x, mu: EmpiricalMeasure, params: ModelParams):
    """Interaction functional; identically 0 when the measure carries no capital."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if moment_M(mu) == 0.0:
        out = np.zeros(len(xs))
    else:
        out = _bracket(mu, xs, params.kernel1, mu.w * mu.h) / _bracket(mu, xs, params.kernel2, mu.w)
    return out if np.ndim(x) else float(out[0])


@memoize(configuration=DefaultInMemoryMemoConfiguration(capacity=1024))
def _memoized_sweep(xs: np.ndarray, mu: EmpiricalMeasure, params: ModelParams) -> np.ndarray:
    values = F(xs, mu, params)
    values.setflags(write=False)
    return values


def f_sweep(xs, mu: EmpiricalMeasure, params: ModelParams) -> np.ndarray:
    """F on a vector of query points, memoized per (points, measure, parameters)."""
    return _memoized_sweep(np.ascontiguousarray(xs, dtype=float), mu, params)


class InteractionSweep:
    """Piecewise-linear reconstruction of x -> F(x, mu) from its values on sweep nodes.
    Queries outside the nodes take the value at the nearest node."""

    def __init__(self, nodes: np.ndarray, values: np.ndarray) -> None:
        self.nodes = nodes
        self.values = values

    def __call__(self, x):
        return np.interp(x, self.nodes, self.values)

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "{name}[nodes={n}, range=({lo:.4g}, {hi:.4g})]".format(name=self.__class__.__name__, n=len(self.nodes),
                                                                    lo=self.nodes[0], hi=self.nodes[-1])


def sweep_nodes(mu: EmpiricalMeasure, x_min: float, x_max: float, n_nodes: int = 513,
                margin: float = 2.0) -> np.ndarray:
    """Uniform nodes covering [x_min, x_max] and the atoms' positions, padded by `margin`."""
    lo = min(x_min, float(mu.x.min())) - margin
    hi = max(x_max, float(mu.x.max())) + margin
    return np.linspace(lo, hi, n_nodes)


def interaction_sweep(mu: EmpiricalMeasure, params: ModelParams, nodes: np.ndarray) -> InteractionSweep:
    return InteractionSweep(nodes, f_sweep(nodes, mu, params))


def f_bounds_check(mu: EmpiricalMeasure, params: ModelParams, xs=None) -> Dict[str, float]:
    """Checks (theta/Theta) M <= F <= (Theta/theta) M over a deterministic x-sweep; reports the worst slack."""
    if xs is None:
        xs = np.linspace(-10.0, 10.0, 401)
    values = F(np.asarray(xs, dtype=float), mu, params)
    m = moment_M(mu)
    lower = (params.theta_lo / params.theta_hi) * m
    upper = (params.theta_hi / params.theta_lo) * m
    lower_slack = float(np.min(values - lower))
    upper_slack = float(np.min(upper - values))
    return {'lower_bound': lower, 'upper_bound': upper, 'lower_slack': lower_slack, 'upper_slack': upper_slack,
            'worst_slack': min(lower_slack, upper_slack), 'ok': lower_slack >= 0.0 and upper_slack >= 0.0}


def f_lipschitz_x_constant(mu: EmpiricalMeasure, params: ModelParams) -> float:
    """2 L_eta Theta theta^-2 M(mu)"""
    return 2.0 * params.L_eta * params.theta_hi / params.theta_lo ** 2 * moment_M(mu)


def f_lipschitz_mu_constant(mu: EmpiricalMeasure, params: ModelParams) -> float:
    """Theta theta^-2 (M2(mu)^(1/2) (L_eta1 + L_eta2) + Theta), the W2-Lipschitz modulus of F(x, .) at mu."""
    return params.theta_hi / params.theta_lo ** 2 * (
        math.sqrt(moment_M2(mu)) * (params.L_eta1 + params.L_eta2) + params.theta_hi)


MEASURE_PERTURBATION_VARIANTS = ('sum', 'printed')


def measure_perturbation_constant(mu_flow: MeasureFlow, nu_flow: MeasureFlow, mu0: EmpiricalMeasure,
                                  params: ModelParams, variant: str = 'sum') -> float:
    """Constant C(mu, nu, mu0, T) bounding E sup|h_mu - h_nu|^2 by C d_{inf,2}(mu, nu)^2.

    `variant='sum'` uses L_eta1 + L_eta2, `variant='printed'` the factor L_eta1 + 1 / L_eta2.
    """
    from capmfg.dynamics import c_constants

    if variant == 'sum':
        factor = params.L_eta1 + params.L_eta2
    elif variant == 'printed':
        factor = params.L_eta1 + (1.0 / params.L_eta2 if params.L_eta2 > 0 else math.inf)
    else:
        raise ValueError('unknown variant {!r} (expected one of {})'.format(variant, MEASURE_PERTURBATION_VARIANTS))
    T = mu_flow.horizon
    ratio2 = (params.theta_hi / params.theta_lo) ** 2
    p2_root = math.sqrt(max(max(moment_P2(m) for m in mu_flow.measures), max(moment_P2(m) for m in nu_flow.measures)))
    m_bar_mu = max(moment_M(m) for m in mu_flow.measures)
    m_bar_nu = max(moment_M(m) for m in nu_flow.measures)
    c22 = c_constants(T, m_bar_nu, params, 2)['C2']
    prefactor = params.theta_hi / params.theta_lo ** 2 * factor * p2_root + ratio2
    exponent = T * c22 + 6.0 * T * params.L_f ** 2 * ratio2 * m_bar_mu ** 2 + 3.0 * T * params.zeta ** 2 \
        + 3.0 * params.chi ** 2
    return 24.0 * T ** 2 * prefactor ** 2 * moment_M2(mu0) * math.exp(exponent)
