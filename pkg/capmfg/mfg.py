"""
[API] The equilibrium map (solve the HJB equation along a measure flow, then push the initial law
forward with the resulting feedback drifts), its damped Picard iteration and equilibrium quality checks.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from capmfg import rng
from capmfg.dynamics import (ConstantPolicy, HorizonConstants, ParticleEnsemble, PiecewiseConstantPolicy, Policy,
                             horizon_constants, running_payoff, simulate_controlled, simulate_mkv_with_diagnostics)
from capmfg.exceptions import HorizonViolationException, ParamsValidationException, ValidationError
from capmfg.hjb import FeedbackPolicy, ValueField, solve_hjb, weighted_gradient_bound
from capmfg.measures import (EmpiricalMeasure, MeasureFlow, flow_distance, flow_moments, mix_flows,
                             q_membership)
from capmfg.params import ModelParams, NumericsParams

logger = logging.getLogger(__name__)

CONVERGED = 'converged'
NOT_CONVERGED = 'not converged'

CONSTANT_GRID_V = 8
CONSTANT_GRID_S = 5
RANDOM_CHALLENGERS = 16
RANDOM_PIECES = 4
DEFAULT_PROBES = ((0.0, -0.5, 0.8), (0.0, -0.5, 1.25), (0.0, 0.5, 0.8), (0.0, 0.5, 1.25))


def _listify(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {k: _listify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_listify(v) for v in value]
    return value


class FixedPointReport:
    """Per-iteration record of the damped Picard iteration (the warm start is kept apart from the iterations)."""

    def __init__(self, tol: float, damping: float, horizon: Optional[Dict[str, object]] = None) -> None:
        self.tol = tol
        self.damping = damping
        self.horizon = horizon or {}
        self.warm_start_gap = math.nan
        self.gaps = []  # type: List[float]
        self.membership = []  # type: List[Dict[str, object]]
        self.moments = []  # type: List[Dict[str, object]]
        self.gradient_bounds = []  # type: List[float]
        self.repairs = []  # type: List[Dict[str, int]]
        self.clamped_queries = []  # type: List[int]
        self.wall_times = []  # type: List[float]
        self.self_map_residual = math.nan
        self.exploitability = None  # type: Optional[Dict[str, object]]
        self.verdict = NOT_CONVERGED

    @property
    def iterations(self) -> int:
        return len(self.gaps)

    @property
    def converged(self) -> bool:
        return self.verdict == CONVERGED

    def record(self, gap: float, membership: Dict[str, object], moments: Dict[str, object], gradient_bound: float,
               repairs: Dict[str, int], clamped: int, wall_time: float) -> None:
        if gap < 0.0:
            raise ValueError('negative gap {}'.format(gap))
        self.gaps.append(gap)
        self.membership.append(membership)
        self.moments.append(_listify(moments))
        self.gradient_bounds.append(gradient_bound)
        self.repairs.append(dict(repairs))
        self.clamped_queries.append(clamped)
        self.wall_times.append(wall_time)

    def as_dict(self) -> Dict[str, object]:
        return {
            'tol': self.tol, 'damping': self.damping, 'horizon': self.horizon, 'verdict': self.verdict,
            'iterations': self.iterations, 'warm_start_gap': self.warm_start_gap, 'gaps': list(self.gaps),
            'membership': list(self.membership), 'moments': list(self.moments),
            'gradient_bounds': list(self.gradient_bounds), 'repairs': list(self.repairs),
            'clamped_queries': list(self.clamped_queries), 'wall_times': list(self.wall_times),
            'self_map_residual': self.self_map_residual, 'exploitability': self.exploitability,
        }

    @staticmethod
    def from_dict(data: Dict[str, object]) -> 'FixedPointReport':
        report = FixedPointReport(data['tol'], data['damping'], data.get('horizon'))
        report.verdict = data['verdict']
        report.warm_start_gap = data['warm_start_gap']
        report.gaps = list(data['gaps'])
        report.membership = list(data['membership'])
        report.moments = list(data['moments'])
        report.gradient_bounds = list(data['gradient_bounds'])
        report.repairs = list(data['repairs'])
        report.clamped_queries = list(data['clamped_queries'])
        report.wall_times = list(data['wall_times'])
        report.self_map_residual = data['self_map_residual']
        report.exploitability = data.get('exploitability')
        return report

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "{name}[verdict={verdict}, iterations={n}, last_gap={gap}]".format(
            name=self.__class__.__name__, verdict=self.verdict, n=self.iterations,
            gap=self.gaps[-1] if self.gaps else None)


def _psi(mu_flow: MeasureFlow, mu0: EmpiricalMeasure, params: ModelParams, numerics: NumericsParams):
    value = solve_hjb(mu_flow, params, numerics)
    flow, diagnostics = simulate_mkv_with_diagnostics(ParticleEnsemble.from_measure(mu0), value, params, numerics,
                                                      times=mu_flow.times)
    return flow, value, diagnostics


def psi_map(mu_flow: MeasureFlow, mu0: EmpiricalMeasure, params: ModelParams,
            numerics: NumericsParams) -> Tuple[MeasureFlow, ValueField]:
    """V = solve_hjb(mu), then the particle system started from mu0 driven by the feedback of V."""
    flow, value, _ = _psi(mu_flow, mu0, params, numerics)
    return flow, value


def check_horizon(mu0: EmpiricalMeasure, params: ModelParams, K1: Optional[float] = None) -> HorizonConstants:
    """Horizon constants of mu0.

    :raises: HorizonViolationException  when the horizon exceeds T_max
    :raises: ParamsValidationException  when an explicit K1 lies below its admissible floor
    """
    constants = horizon_constants(mu0, params)
    if K1 is not None:
        if K1 < constants.K1_floor:
            raise ParamsValidationException([ValidationError('K1', 'K1 below its admissible floor', K1)])
        constants = horizon_constants(mu0, params, headroom=K1 / constants.K1_floor - 1.0)
    if params.horizon > constants.T_max:
        raise HorizonViolationException(params.horizon, constants.T_max)
    return constants


def solve_mfg(mu0: EmpiricalMeasure, params: ModelParams, numerics: NumericsParams, K1: Optional[float] = None,
              with_exploitability: bool = True,
              probes: Sequence[Tuple[float, float, float]] = DEFAULT_PROBES
              ) -> Tuple[MeasureFlow, ValueField, FixedPointReport]:
    """Warm start mu1 = Psi(mu0 constant in time), then mu_{k+1} = mix(lambda, Psi(mu_k), mu_k) until
    d_{inf,2}(mu_{k+1}, mu_k) <= tol_fp or max_iter iterations.

    Non-convergence is a verdict of the report, not an error.

    :raises: HorizonViolationException  before iterating when the horizon exceeds T_max
    """
    constants = check_horizon(mu0, params, K1)
    report = FixedPointReport(numerics.tol_fp, numerics.damping, constants.as_dict())
    times = MeasureFlow.uniform_grid(params.horizon, numerics.n_time)

    def distance(a: MeasureFlow, b: MeasureFlow) -> float:
        return flow_distance(a, b, numerics.ot_cap, numerics.seed, numerics.threads)

    started = time.perf_counter()
    seed_flow = MeasureFlow.constant(mu0, times)
    current, value, _ = _psi(seed_flow, mu0, params, numerics)
    report.warm_start_gap = distance(current, seed_flow)
    logger.info('warm start: gap %s in %.3fs', report.warm_start_gap, time.perf_counter() - started)

    for k in range(1, numerics.max_iter + 1):
        started = time.perf_counter()
        image, value, diagnostics = _psi(current, mu0, params, numerics)
        mixed = mix_flows(numerics.damping, image, current, numerics.seed + k)
        gap = distance(mixed, current)
        report.self_map_residual = distance(image, current)
        membership = q_membership(mixed, constants.K1, constants.K2, mu0, numerics.ot_cap, numerics.seed,
                                  numerics.threads)
        report.record(gap, membership.as_dict(), flow_moments(mixed), weighted_gradient_bound(value),
                      value.metadata.get('repairs', {}), diagnostics.clamped_queries,
                      time.perf_counter() - started)
        logger.debug('iteration %s: gap %s, membership %s', k, gap, membership)
        current = mixed
        if gap <= numerics.tol_fp:
            report.verdict = CONVERGED
            break
    logger.info('fixed point %s after %s iterations (gaps %s)', report.verdict, report.iterations, report.gaps)
    if not report.converged:
        logger.warning('no convergence within %s iterations; gap sequence %s', numerics.max_iter, report.gaps)
    if with_exploitability:
        report.exploitability = exploitability(current, value, params, numerics, probes=probes).as_dict()
    return current, value, report


# Equilibrium quality

def challengers(params: ModelParams, horizon: float, seed: int) -> List[Policy]:
    """8 x 5 constant (v, s) policies and 16 random piecewise-constant ones."""
    v_lo, v_hi = params.control_box
    policies = [ConstantPolicy(v, s) for v in np.linspace(v_lo, v_hi, CONSTANT_GRID_V)
                for s in np.linspace(0.0, 1.0, CONSTANT_GRID_S)]  # type: List[Policy]
    generator = rng.generator(seed, 'mfg/challengers')
    for _ in range(RANDOM_CHALLENGERS):
        breakpoints = np.r_[0.0, np.sort(generator.uniform(0.0, horizon, RANDOM_PIECES - 1))]
        policies.append(PiecewiseConstantPolicy(breakpoints, generator.uniform(v_lo, v_hi, RANDOM_PIECES),
                                                generator.uniform(0.0, 1.0, RANDOM_PIECES)))
    return policies


class ExploitabilityReport:
    """Largest advantage of a challenger over the feedback policy across probe points (common random numbers)."""

    def __init__(self, gap: float, std_error: float, probes: List[Dict[str, object]]) -> None:
        self.gap = gap
        self.std_error = std_error
        self.probes = probes

    def exceeds(self, tolerance: float) -> bool:
        return self.gap > tolerance

    def as_dict(self) -> Dict[str, object]:
        return {'gap': self.gap, 'std_error': self.std_error, 'probes': self.probes}

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "{name}[gap={gap:.6g}, std_error={se:.3g}]".format(name=self.__class__.__name__, gap=self.gap,
                                                                   se=self.std_error)


def exploitability(mu_flow: MeasureFlow, value: ValueField, params: ModelParams, numerics: NumericsParams,
                   probes: Sequence[Tuple[float, float, float]] = DEFAULT_PROBES,
                   n_paths: Optional[int] = None) -> ExploitabilityReport:
    """max over probes (t0, x0, h0) and challengers of J(challenger) - J(feedback)."""
    feedback = FeedbackPolicy(value, mu_flow, params, numerics)
    suite = [feedback] + challengers(params, mu_flow.horizon, numerics.seed)

    def payoffs(probe_policy):
        (t0, x0, h0), policy = probe_policy
        start = mu_flow.index_of(t0)
        bundle = simulate_controlled(x0, h0, policy, mu_flow, params, numerics, label='mfg/exploitability',
                                     n_paths=n_paths, start_index=start)
        return running_payoff(bundle, mu_flow, params, numerics, start)

    jobs = [(probe, policy) for probe in probes for policy in suite]
    if numerics.threads > 1:
        with ThreadPoolExecutor(max_workers=numerics.threads) as executor:
            results = list(executor.map(payoffs, jobs))
    else:
        results = [payoffs(job) for job in jobs]

    gap, gap_error = -math.inf, 0.0
    details = []
    for p, probe in enumerate(probes):
        block = results[p * len(suite):(p + 1) * len(suite)]
        own = block[0]
        advantages = [float(np.mean(r - own)) for r in block]
        best = int(np.argmax(advantages))
        difference = block[best] - own
        error = float(difference.std(ddof=1) / math.sqrt(len(difference))) if len(difference) > 1 else 0.0
        details.append({'probe': list(probe), 'feedback_value': float(np.mean(own)), 'advantage': advantages[best],
                        'std_error': error, 'best_challenger': repr(suite[best])})
        if advantages[best] > gap:
            gap, gap_error = advantages[best], error
    return ExploitabilityReport(gap, gap_error, details)


def convergence_diagnostics(report: FixedPointReport) -> Dict[str, object]:
    """Geometric rate fitted to the gap sequence, Q-membership over iterations and monotonicity flags."""
    gaps = np.asarray(report.gaps, dtype=float)
    positive = gaps[gaps > 0.0]
    rate = None  # type: Optional[float]
    if len(positive) >= 2:
        slope = np.polyfit(np.arange(len(positive)), np.log(positive), 1)[0]
        rate = float(math.exp(slope))
    return {
        'verdict': report.verdict,
        'iterations': report.iterations,
        'gaps': gaps.tolist(),
        'rate': rate,
        'all_zero': bool(np.all(gaps == 0.0)),
        'monotone': bool(np.all(np.diff(gaps) <= 0.0)),
        'membership': [bool(m.get('p2_ok') and m.get('holder_ok') and m.get('initial_ok'))
                       for m in report.membership],
        'gradient_bounds_finite': bool(np.all(np.isfinite(report.gradient_bounds))),
    }
