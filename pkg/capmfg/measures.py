"""
[API] Empirical probability measures on R x R+, their moments, Wasserstein distances,
flows on a uniform time grid and membership in the compact set of flows used by the fixed point.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Optional, Sequence

import numpy as np
import ot
from scipy.optimize import linear_sum_assignment

from capmfg import rng
from capmfg.exceptions import MeasureInvariantException, SupportSizeExceededException, GridMismatchException
from capmfg.memo.key import array_digest

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-12
DEFAULT_OT_CAP = 512


class EmpiricalMeasure:
    """Weighted atoms (x_i, h_i) with h_i >= 0 and weights summing to one. Immutable."""

    def __init__(self, x, h, w) -> None:
        x = np.array(x, dtype=float, ndmin=1)
        h = np.array(h, dtype=float, ndmin=1)
        w = np.array(w, dtype=float, ndmin=1)
        if not (x.ndim == h.ndim == w.ndim == 1) or not (len(x) == len(h) == len(w)) or len(x) == 0:
            raise MeasureInvariantException('points and weights must be 1-d of equal positive length '
                                            '(got {}, {}, {})'.format(x.shape, h.shape, w.shape))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(h)) and np.all(np.isfinite(w))):
            raise MeasureInvariantException('atoms and weights must be finite')
        if np.any(h < 0.0):
            raise MeasureInvariantException('capital must be nonnegative (atom {})'.format(int(np.argmin(h))))
        if np.any(w < 0.0):
            raise MeasureInvariantException('weights must be nonnegative (atom {})'.format(int(np.argmin(w))))
        total = math.fsum(w)
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise MeasureInvariantException('weights sum to {!r}, not 1'.format(total))
        for array in (x, h, w):
            array.setflags(write=False)
        self.__x = x
        self.__h = h
        self.__w = w
        self.__fingerprint = None  # type: Optional[str]

    @staticmethod
    def uniform(x, h) -> 'EmpiricalMeasure':
        n = len(np.atleast_1d(x))
        return EmpiricalMeasure(x, h, np.full(n, 1.0 / n))

    @staticmethod
    def normalized(x, h, w) -> 'EmpiricalMeasure':
        w = np.asarray(w, dtype=float)
        return EmpiricalMeasure(x, h, w / math.fsum(w))

    @staticmethod
    def dirac(x: float, h: float) -> 'EmpiricalMeasure':
        return EmpiricalMeasure([x], [h], [1.0])

    @property
    def x(self) -> np.ndarray:
        return self.__x

    @property
    def h(self) -> np.ndarray:
        return self.__h

    @property
    def w(self) -> np.ndarray:
        return self.__w

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.__x, self.__h])

    def is_uniform(self) -> bool:
        return bool(np.all(self.__w == self.__w[0]))

    def fingerprint(self) -> str:
        """Content digest; equal atoms and weights give equal fingerprints."""
        if self.__fingerprint is None:
            self.__fingerprint = array_digest(self.__x, self.__h, self.__w)
        return self.__fingerprint

    def __len__(self) -> int:
        return len(self.__x)

    def __eq__(self, o) -> bool:
        if not isinstance(o, EmpiricalMeasure):
            return False
        return np.array_equal(self.__x, o.x) and np.array_equal(self.__h, o.h) and np.array_equal(self.__w, o.w)

    def __hash__(self) -> int:
        return hash(self.fingerprint())

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "{name}[atoms={atoms}, M={m:.6g}]".format(name=self.__class__.__name__, atoms=len(self),
                                                        m=moment_M(self))


class MeasureFlow:
    """One empirical measure per time of a uniform grid t_0 = 0 < ... < t_n = T."""

    def __init__(self, times, measures: Sequence[EmpiricalMeasure]) -> None:
        times = np.array(times, dtype=float, ndmin=1)
        if len(times) != len(measures) or len(times) == 0:
            raise MeasureInvariantException('flow needs one measure per grid time '
                                            '({} times, {} measures)'.format(len(times), len(measures)))
        if len(times) > 1:
            steps = np.diff(times)
            if np.any(steps <= 0.0):
                raise MeasureInvariantException('flow times must be strictly increasing')
            if np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, abs(times[-1])):
                raise MeasureInvariantException('flow times must be uniformly spaced')
        times.setflags(write=False)
        self.__times = times
        self.__measures = tuple(measures)

    @staticmethod
    def uniform_grid(horizon: float, n_time: int) -> np.ndarray:
        return np.linspace(0.0, horizon, n_time + 1)

    @staticmethod
    def constant(mu: EmpiricalMeasure, times) -> 'MeasureFlow':
        times = np.asarray(times, dtype=float)
        return MeasureFlow(times, [mu] * len(times))

    @property
    def times(self) -> np.ndarray:
        return self.__times

    @property
    def measures(self):
        return self.__measures

    @property
    def horizon(self) -> float:
        return float(self.__times[-1])

    @property
    def dt(self) -> float:
        return float(self.__times[1] - self.__times[0]) if len(self.__times) > 1 else 0.0

    def at(self, index: int) -> EmpiricalMeasure:
        return self.__measures[index]

    def index_of(self, t: float) -> int:
        """Grid index of the latest grid time not after `t` (clamped to the grid)."""
        if len(self.__times) == 1:
            return 0
        index = int(math.floor((t - self.__times[0]) / self.dt + 1e-9))
        return min(max(index, 0), len(self.__times) - 1)

    def is_path_aligned(self) -> bool:
        """True when all measures carry the same number of atoms with the same weights,
        so atom i at every time belongs to one path."""
        first = self.__measures[0]
        return all(len(m) == len(first) and np.array_equal(m.w, first.w) for m in self.__measures)

    def fingerprint(self) -> str:
        return array_digest(self.__times, np.array([int(m.fingerprint()[:15], 16) for m in self.__measures]))

    def __len__(self) -> int:
        return len(self.__times)

    def __eq__(self, o) -> bool:
        if not isinstance(o, MeasureFlow):
            return False
        return np.array_equal(self.__times, o.times) and all(a == b for a, b in zip(self.__measures, o.measures))

    def __hash__(self) -> int:
        return hash(self.fingerprint())

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "{name}[times={n}, T={T:.6g}]".format(name=self.__class__.__name__, n=len(self), T=self.horizon)


def moment_M(mu: EmpiricalMeasure) -> float:
    """Mean capital: sum w_i h_i."""
    return math.fsum(mu.w * mu.h)


def moment_M2(mu: EmpiricalMeasure) -> float:
    return math.fsum(mu.w * mu.h * mu.h)


def moment_P2(mu: EmpiricalMeasure) -> float:
    return math.fsum(mu.w * (mu.x * mu.x + mu.h * mu.h))


def shift(mu: EmpiricalMeasure, c: float) -> EmpiricalMeasure:
    """Translates every position by c."""
    return EmpiricalMeasure(mu.x + c, mu.h, mu.w)


def _ground_cost(mu: EmpiricalMeasure, nu: EmpiricalMeasure, squared: bool) -> np.ndarray:
    dx = mu.x[:, None] - nu.x[None, :]
    dh = mu.h[:, None] - nu.h[None, :]
    cost = dx * dx + dh * dh
    return cost if squared else np.sqrt(cost)


def _transport_cost(mu: EmpiricalMeasure, nu: EmpiricalMeasure, squared: bool, cap: int) -> float:
    size = len(mu) + len(nu)
    if size > cap:
        raise SupportSizeExceededException(size, cap)
    cost = _ground_cost(mu, nu, squared)
    if len(mu) == len(nu) and mu.is_uniform() and nu.is_uniform():
        # equal-weight clouds: a permutation coupling is optimal
        rows, cols = linear_sum_assignment(cost)
        return math.fsum(cost[rows, cols]) / len(mu)
    a = np.ascontiguousarray(mu.w / mu.w.sum())
    b = np.ascontiguousarray(nu.w / nu.w.sum())
    return float(ot.emd2(a, b, np.ascontiguousarray(cost), numItermax=10 ** 7))


def wasserstein2(mu: EmpiricalMeasure, nu: EmpiricalMeasure, cap: int = DEFAULT_OT_CAP) -> float:
    """Exact W2 with squared Euclidean ground cost on (x, h).

    :raises: SupportSizeExceededException  when the combined support exceeds `cap`
    """
    return math.sqrt(max(_transport_cost(mu, nu, True, cap), 0.0))


def wasserstein1(mu: EmpiricalMeasure, nu: EmpiricalMeasure, cap: int = DEFAULT_OT_CAP) -> float:
    """Exact W1 with Euclidean ground cost on (x, h)."""
    return max(_transport_cost(mu, nu, False, cap), 0.0)


def subsample(mu: EmpiricalMeasure, cap: int, seed: int) -> EmpiricalMeasure:
    """Deterministic h-quantile stratified subsample to `cap` equally weighted atoms
    (returns `mu` itself when it is already small enough)."""
    if len(mu) <= cap:
        return mu
    order = np.lexsort((mu.x, mu.h))
    cumulative = np.cumsum(mu.w[order])
    cumulative /= cumulative[-1]
    targets = (np.arange(cap) + rng.uniforms(seed, 'measures/subsample', 0, 0, cap)) / cap
    picks = np.minimum(np.searchsorted(cumulative, targets, side='left'), len(mu) - 1)
    chosen = order[picks]
    return EmpiricalMeasure.uniform(mu.x[chosen], mu.h[chosen])


def wasserstein2_capped(mu: EmpiricalMeasure, nu: EmpiricalMeasure, cap: int = DEFAULT_OT_CAP,
                        seed: int = 0) -> float:
    """W2, subsampling both measures to half of `cap` when the exact solver would refuse them."""
    if len(mu) + len(nu) <= cap:
        return wasserstein2(mu, nu, cap)
    half = cap // 2
    logger.debug('subsampling measures of sizes %s and %s to %s atoms', len(mu), len(nu), half)
    return wasserstein2(subsample(mu, half, seed), subsample(nu, half, seed), cap)


def _check_same_grid(mu_flow: MeasureFlow, nu_flow: MeasureFlow) -> None:
    if len(mu_flow) != len(nu_flow) or not np.allclose(mu_flow.times, nu_flow.times, rtol=1e-12, atol=1e-14):
        raise GridMismatchException('flows live on different time grids ({} vs {} times)'
                                    .format(len(mu_flow), len(nu_flow)))


def _map_ordered(function, items, threads: int):
    if threads <= 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(function, items))


def flow_distance(mu_flow: MeasureFlow, nu_flow: MeasureFlow, cap: int = DEFAULT_OT_CAP, seed: int = 0,
                  threads: int = 1) -> float:
    """d_{inf,2}: maximum over grid times of W2.

    :raises: GridMismatchException  when the flows do not share their time grid
    """
    _check_same_grid(mu_flow, nu_flow)
    distances = _map_ordered(lambda k: wasserstein2_capped(mu_flow.at(k), nu_flow.at(k), cap, seed),
                             range(len(mu_flow)), threads)
    return max(distances)


def holder_seminorm(flow: MeasureFlow, cap: int = DEFAULT_OT_CAP, seed: int = 0, threads: int = 1) -> float:
    """max over grid pairs s != t of W2(mu(s), mu(t)) / |s - t|^(1/2)"""
    times = flow.times
    pairs = [(i, j) for i in range(len(times)) for j in range(i + 1, len(times))]

    def ratio(pair):
        i, j = pair
        return wasserstein2_capped(flow.at(i), flow.at(j), cap, seed) / math.sqrt(times[j] - times[i])

    return max(_map_ordered(ratio, pairs, threads), default=0.0)


def path_holder_bound(flow: MeasureFlow) -> float:
    """Upper bound of `holder_seminorm` from the coupling pairing atom i with atom i.
    Infinite when the flow is not path aligned."""
    if len(flow) < 2:
        return 0.0
    if not flow.is_path_aligned():
        return math.inf
    times = flow.times
    w = flow.at(0).w
    x = np.stack([m.x for m in flow.measures])
    h = np.stack([m.h for m in flow.measures])
    best = 0.0
    for i in range(len(times) - 1):
        dx = x[i + 1:] - x[i]
        dh = h[i + 1:] - h[i]
        cost = np.sqrt(np.maximum((dx * dx + dh * dh) @ w, 0.0))
        best = max(best, float(np.max(cost / np.sqrt(times[i + 1:] - times[i]))))
    return best


def mix_flows(lam: float, new: MeasureFlow, old: MeasureFlow, seed: int) -> MeasureFlow:
    """Damped mixture lam * new + (1 - lam) * old compacted back to N atoms.

    Path-aligned flows of equal size keep round(lam * N) whole paths from `new` and the rest from `old`
    (the same labels at every time); otherwise every time slice is the weighted union resampled to N atoms.
    """
    _check_same_grid(new, old)
    if lam >= 1.0:
        return new
    n = len(new.at(0))
    if new.is_path_aligned() and old.is_path_aligned() and len(old.at(0)) == n and new.at(0).is_uniform():
        chosen = np.zeros(n, dtype=bool)
        chosen[rng.permutation(seed, 'measures/mix', n)[:int(round(lam * n))]] = True
        measures = [EmpiricalMeasure(np.where(chosen, a.x, b.x), np.where(chosen, a.h, b.h), a.w)
                    for a, b in zip(new.measures, old.measures)]
        return MeasureFlow(new.times, measures)
    measures = []
    for a, b in zip(new.measures, old.measures):
        union = EmpiricalMeasure.normalized(np.concatenate([a.x, b.x]), np.concatenate([a.h, b.h]),
                                            np.concatenate([lam * a.w, (1.0 - lam) * b.w]))
        measures.append(subsample(union, n, seed))
    return MeasureFlow(new.times, measures)


def flow_moments(flow: MeasureFlow) -> Dict[str, np.ndarray]:
    """Per-time traces of M, M2, P2 and the smallest positive capital (nan when every atom sits at zero)."""
    min_h = []
    for mu in flow.measures:
        positive = mu.h[(mu.h > 0.0) & (mu.w > 0.0)]
        min_h.append(float(positive.min()) if len(positive) else math.nan)
    return {
        't': np.array(flow.times),
        'M': np.array([moment_M(mu) for mu in flow.measures]),
        'M2': np.array([moment_M2(mu) for mu in flow.measures]),
        'P2': np.array([moment_P2(mu) for mu in flow.measures]),
        'min_h_unmasked': np.array(min_h),
    }


class QMembership:
    """Report of the three membership conditions with their witnesses."""

    def __init__(self, p2_ok: bool, holder_ok: bool, initial_ok: bool, p2_max: float, p2_witness_time: float,
                 holder_value: float, holder_exact: bool) -> None:
        self.p2_ok = p2_ok
        self.holder_ok = holder_ok
        self.initial_ok = initial_ok
        self.p2_max = p2_max
        self.p2_witness_time = p2_witness_time
        self.holder_value = holder_value
        self.holder_exact = holder_exact

    @property
    def member(self) -> bool:
        return self.p2_ok and self.holder_ok and self.initial_ok

    def as_dict(self) -> Dict[str, object]:
        return {'p2_ok': self.p2_ok, 'holder_ok': self.holder_ok, 'initial_ok': self.initial_ok,
                'p2_max': self.p2_max, 'p2_witness_time': self.p2_witness_time,
                'holder_value': self.holder_value, 'holder_exact': self.holder_exact}

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "{name}[{fields}]".format(name=self.__class__.__name__, fields=self.as_dict())


def q_membership(flow: MeasureFlow, K1: float, K2: float, mu0: Optional[EmpiricalMeasure] = None,
                 cap: int = DEFAULT_OT_CAP, seed: int = 0, threads: int = 1) -> QMembership:
    """Checks sup_t P2 <= 2 K1, Hölder seminorm <= K2 and mu(0) = mu0 (same atoms)."""
    p2 = np.array([moment_P2(mu) for mu in flow.measures])
    worst = int(np.argmax(p2))
    holder = path_holder_bound(flow)
    exact = False
    if holder > K2:
        holder = holder_seminorm(flow, cap, seed, threads)
        exact = True
    initial_ok = mu0 is None or flow.at(0) == mu0
    return QMembership(p2_ok=bool(p2[worst] <= 2.0 * K1), holder_ok=bool(holder <= K2), initial_ok=initial_ok,
                       p2_max=float(p2[worst]), p2_witness_time=float(flow.times[worst]),
                       holder_value=float(holder), holder_exact=exact)
