"""
[API] Model and numerical parameters, their validation and the canonical scenarios.

Model functions (interaction kernels, production, amenity, movement cost, initial law)
are descriptors from a small tagged-parametric family, so every Lipschitz constant and
bound used elsewhere is exact rather than estimated.
"""

import dataclasses
import logging
import math
from abc import ABCMeta, abstractmethod
from typing import Any, Dict, List, Tuple, Type

import numpy as np
from scipy.special import ndtri

from capmfg import rng
from capmfg.exceptions import ParamsValidationException, ValidationError
from capmfg.mfg_configuration import default_threads

logger = logging.getLogger(__name__)

_SAMPLE_SEED = 20240611
_SAMPLE_COUNT = 10000


class Descriptor(metaclass=ABCMeta):
    """Parametric model function. Equal kind and fields means equal function."""

    kind = ''

    @abstractmethod
    def fields(self) -> Dict[str, float]:
        """Flat parameter view, keys matching constructor arguments."""
        raise NotImplementedError()

    def __eq__(self, o) -> bool:
        return type(self) is type(o) and self.fields() == o.fields()

    def __hash__(self) -> int:
        return hash((self.kind, tuple(sorted(self.fields().items()))))

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        fields = sorted(self.fields().items())
        return "{name}[{fields}]".format(name=self.__class__.__name__,
                                         fields=', '.join('{}={}'.format(k, v) for k, v in fields))


class Kernel(Descriptor):
    """Radial interaction kernel r -> eta(r), r >= 0."""

    @abstractmethod
    def __call__(self, r):
        raise NotImplementedError()

    @abstractmethod
    def floor(self) -> float:
        raise NotImplementedError()

    @abstractmethod
    def cap(self) -> float:
        raise NotImplementedError()

    @abstractmethod
    def lipschitz(self) -> float:
        raise NotImplementedError()


class GaussianBumpKernel(Kernel):
    """eta(r) = theta + (theta_cap - theta) exp(-r^2 / length^2)"""

    kind = 'gaussian_bump'

    def __init__(self, theta: float, theta_cap: float, length: float) -> None:
        self.theta = float(theta)
        self.theta_cap = float(theta_cap)
        self.length = float(length)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.theta + (self.theta_cap - self.theta) * np.exp(-(r / self.length) ** 2)

    def floor(self) -> float:
        return min(self.theta, self.theta_cap)

    def cap(self) -> float:
        return max(self.theta, self.theta_cap)

    def lipschitz(self) -> float:
        # max of |d/dr exp(-r^2/l^2)| is sqrt(2/e)/l, attained at r = l/sqrt(2)
        return abs(self.theta_cap - self.theta) * math.sqrt(2.0 / math.e) / self.length

    def fields(self) -> Dict[str, float]:
        return {'theta': self.theta, 'theta_cap': self.theta_cap, 'length': self.length}


class Production(Descriptor):
    @abstractmethod
    def __call__(self, h):
        raise NotImplementedError()

    @abstractmethod
    def lipschitz(self) -> float:
        raise NotImplementedError()

    @abstractmethod
    def inverse(self, value):
        """f^-1 on the range of f, +inf above it."""
        raise NotImplementedError()


class LinearProduction(Production):
    kind = 'linear'

    def __init__(self, beta: float) -> None:
        self.beta = float(beta)

    def __call__(self, h):
        return self.beta * np.asarray(h, dtype=float)

    def lipschitz(self) -> float:
        return abs(self.beta)

    def inverse(self, value):
        return np.asarray(value, dtype=float) / self.beta

    def fields(self) -> Dict[str, float]:
        return {'beta': self.beta}


class SaturatingProduction(Production):
    """f(h) = beta h / (1 + h / h_sat)"""

    kind = 'saturating'

    def __init__(self, beta: float, h_sat: float) -> None:
        self.beta = float(beta)
        self.h_sat = float(h_sat)

    def __call__(self, h):
        h = np.asarray(h, dtype=float)
        return self.beta * h / (1.0 + h / self.h_sat)

    def lipschitz(self) -> float:
        return abs(self.beta)

    def inverse(self, value):
        value = np.asarray(value, dtype=float)
        room = self.beta - value / self.h_sat
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.where(room > 0.0, value / np.where(room > 0.0, room, 1.0), np.inf)

    def fields(self) -> Dict[str, float]:
        return {'beta': self.beta, 'h_sat': self.h_sat}


class Amenity(Descriptor):
    @abstractmethod
    def __call__(self, x):
        raise NotImplementedError()

    @abstractmethod
    def lower(self) -> float:
        raise NotImplementedError()

    @abstractmethod
    def upper(self) -> float:
        raise NotImplementedError()

    @abstractmethod
    def lipschitz(self) -> float:
        raise NotImplementedError()


class TanhAmenity(Amenity):
    """A(x) = a_lo + (a_hi - a_lo) (1 + tanh(x / length)) / 2"""

    kind = 'tanh'

    def __init__(self, a_lo: float, a_hi: float, length: float) -> None:
        self.a_lo = float(a_lo)
        self.a_hi = float(a_hi)
        self.length = float(length)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.a_lo + (self.a_hi - self.a_lo) * 0.5 * (1.0 + np.tanh(x / self.length))

    def lower(self) -> float:
        return min(self.a_lo, self.a_hi)

    def upper(self) -> float:
        return max(self.a_lo, self.a_hi)

    def lipschitz(self) -> float:
        return abs(self.a_hi - self.a_lo) / (2.0 * self.length)

    def fields(self) -> Dict[str, float]:
        return {'a_lo': self.a_lo, 'a_hi': self.a_hi, 'length': self.length}


class MovementCost(Descriptor):
    @abstractmethod
    def __call__(self, v):
        raise NotImplementedError()

    @abstractmethod
    def maximizer(self, p, v_lo: float, v_hi: float):
        """argmax over v in [v_lo, v_hi] of p v - a(v)"""
        raise NotImplementedError()


class PolynomialCost(MovementCost):
    """a(v) = kappa v^(2 half_degree), strictly convex for kappa > 0."""

    kind = 'polynomial'

    def __init__(self, kappa: float, half_degree: int = 1) -> None:
        self.kappa = float(kappa)
        self.half_degree = int(half_degree)

    def __call__(self, v):
        return self.kappa * np.asarray(v, dtype=float) ** (2 * self.half_degree)

    def maximizer(self, p, v_lo: float, v_hi: float):
        p = np.asarray(p, dtype=float)
        m = self.half_degree
        if m == 1:
            unconstrained = p / (2.0 * self.kappa)
        else:
            unconstrained = np.sign(p) * (np.abs(p) / (2.0 * m * self.kappa)) ** (1.0 / (2 * m - 1))
        return np.clip(unconstrained, v_lo, v_hi)

    def fields(self) -> Dict[str, float]:
        return {'kappa': self.kappa, 'half_degree': self.half_degree}


class InitialLaw(Descriptor):
    @abstractmethod
    def stratified_sample(self, n: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
        """Deterministic n-point sample (x, h) of the law."""
        raise NotImplementedError()


class LogNormalInitialLaw(InitialLaw):
    """Gaussian positions, independent log-normal capital and an atom of mass `zero_fraction` at h = 0."""

    kind = 'lognormal'

    def __init__(self, x_mean: float = 0.0, x_sd: float = 0.5, log_h_mean: float = 0.0, log_h_sd: float = 0.25,
                 zero_fraction: float = 0.0) -> None:
        self.x_mean = float(x_mean)
        self.x_sd = float(x_sd)
        self.log_h_mean = float(log_h_mean)
        self.log_h_sd = float(log_h_sd)
        self.zero_fraction = float(zero_fraction)

    def stratified_sample(self, n: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
        n_zero = int(round(self.zero_fraction * n))
        n_pos = n - n_zero
        x_quantiles = ndtri((np.arange(n) + 0.5) / n)
        x = self.x_mean + self.x_sd * x_quantiles[rng.permutation(seed, 'initial-law/x', n)]
        h = np.zeros(n)
        if n_pos > 0:
            h[n_zero:] = np.exp(self.log_h_mean + self.log_h_sd * ndtri((np.arange(n_pos) + 0.5) / n_pos))
        return x, h

    def fields(self) -> Dict[str, float]:
        return {'x_mean': self.x_mean, 'x_sd': self.x_sd, 'log_h_mean': self.log_h_mean,
                'log_h_sd': self.log_h_sd, 'zero_fraction': self.zero_fraction}


DESCRIPTOR_KINDS = {
    'kernel': {GaussianBumpKernel.kind: GaussianBumpKernel},
    'production': {LinearProduction.kind: LinearProduction, SaturatingProduction.kind: SaturatingProduction},
    'amenity': {TanhAmenity.kind: TanhAmenity},
    'cost': {PolynomialCost.kind: PolynomialCost},
    'initial_law': {LogNormalInitialLaw.kind: LogNormalInitialLaw},
}  # type: Dict[str, Dict[str, Type[Descriptor]]]


def build_descriptor(family: str, kind: str, fields: Dict[str, Any]) -> Descriptor:
    kinds = DESCRIPTOR_KINDS[family]
    if kind not in kinds:
        raise ValueError('unknown {} kind {!r} (expected one of {})'.format(family, kind, sorted(kinds)))
    return kinds[kind](**fields)


@dataclasses.dataclass(frozen=True)
class ModelParams:
    rho: float
    zeta: float
    chi: float
    eps: float
    gamma: float
    sigma: float
    theta_lo: float
    theta_hi: float
    kernel1: Kernel
    kernel2: Kernel
    f_spec: Production
    A_spec: Amenity
    cost_spec: MovementCost
    control_box: Tuple[float, float]
    horizon: float
    initial_law: InitialLaw = dataclasses.field(default_factory=LogNormalInitialLaw)

    @property
    def eta_exp(self) -> float:
        return (1.0 - self.gamma) * (1.0 - self.sigma)

    @property
    def L_f(self) -> float:
        return self.f_spec.lipschitz()

    @property
    def L_A(self) -> float:
        return self.A_spec.lipschitz()

    @property
    def A_lo(self) -> float:
        return self.A_spec.lower()

    @property
    def A_hi(self) -> float:
        return self.A_spec.upper()

    @property
    def L_eta1(self) -> float:
        return self.kernel1.lipschitz()

    @property
    def L_eta2(self) -> float:
        return self.kernel2.lipschitz()

    @property
    def L_eta(self) -> float:
        return max(self.L_eta1, self.L_eta2)

    @property
    def B_bar(self) -> float:
        """Bound on the velocity (and hence on D_pH0)."""
        return max(abs(self.control_box[0]), abs(self.control_box[1]))

    @property
    def kernel_ratio(self) -> float:
        """Theta / theta"""
        return self.theta_hi / self.theta_lo

    def replace(self, **changes) -> 'ModelParams':
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True)
class NumericsParams:
    n_particles: int = 2000
    n_time: int = 64
    x_min: float = -4.0
    x_max: float = 4.0
    y_min: float = -6.0
    y_max: float = 3.0
    n_x: int = 128
    n_y: int = 128
    damping: float = 0.5
    tol_fp: float = 1e-6
    max_iter: int = 25
    seed: int = 1
    mc_paths: int = 2000
    ot_cap: int = 512
    threads: int = default_threads

    @property
    def grid(self) -> Tuple[Tuple[float, float], Tuple[float, float], int, int]:
        return (self.x_min, self.x_max), (self.y_min, self.y_max), self.n_x, self.n_y

    def replace(self, **changes) -> 'NumericsParams':
        return dataclasses.replace(self, **changes)


def _witness_rng() -> np.random.Generator:
    return rng.generator(_SAMPLE_SEED, 'params/validate')


def _check_kernel(name: str, kernel: Kernel, params: ModelParams, errors: List[ValidationError]) -> None:
    r = np.concatenate([np.linspace(0.0, 50.0, 2001), _witness_rng().exponential(5.0, _SAMPLE_COUNT)])
    values = kernel(r)
    if np.any(values <= 0.0):
        i = int(np.argmin(values))
        errors.append(ValidationError(name, 'kernel violates θ > 0', (float(r[i]), float(values[i]))))
        return
    below = values < params.theta_lo * (1.0 - 1e-12)
    if np.any(below):
        i = int(np.argmax(below))
        errors.append(ValidationError(name, 'kernel below floor theta_lo', (float(r[i]), float(values[i]))))
    above = values > params.theta_hi * (1.0 + 1e-12)
    if np.any(above):
        i = int(np.argmax(above))
        errors.append(ValidationError(name, 'kernel above cap theta_hi', (float(r[i]), float(values[i]))))


def _check_production(params: ModelParams, errors: List[ValidationError]) -> None:
    f = params.f_spec
    if float(f(0.0)) != 0.0:
        errors.append(ValidationError('f_spec', 'f(0) must be 0', float(f(0.0))))
    generator = _witness_rng()
    h1 = generator.exponential(5.0, _SAMPLE_COUNT)
    h2 = generator.exponential(5.0, _SAMPLE_COUNT)
    lo, hi = np.minimum(h1, h2), np.maximum(h1, h2)
    decreasing = f(hi) < f(lo)
    if np.any(decreasing):
        i = int(np.argmax(decreasing))
        errors.append(ValidationError('f_spec', 'f must be nondecreasing', (float(lo[i]), float(hi[i]))))
    spread = hi - lo
    ratio = np.abs(f(hi) - f(lo)) / np.where(spread > 0, spread, 1.0)
    if np.any(ratio > f.lipschitz() * (1.0 + 1e-9) + 1e-12):
        i = int(np.argmax(ratio))
        errors.append(ValidationError('f_spec', 'f exceeds its Lipschitz constant', (float(lo[i]), float(hi[i]))))


def _check_amenity(params: ModelParams, errors: List[ValidationError]) -> None:
    amenity = params.A_spec
    if amenity.lower() <= 0.0:
        errors.append(ValidationError('A_spec', 'amenity lower bound must be positive', amenity.lower()))
        return
    x = np.concatenate([np.linspace(-100.0, 100.0, 2001), _witness_rng().normal(0.0, 20.0, _SAMPLE_COUNT)])
    values = amenity(x)
    outside = (values < amenity.lower() * (1.0 - 1e-12)) | (values > amenity.upper() * (1.0 + 1e-12))
    if np.any(outside):
        i = int(np.argmax(outside))
        errors.append(ValidationError('A_spec', 'amenity outside its bounds', (float(x[i]), float(values[i]))))


def _check_cost(params: ModelParams, errors: List[ValidationError]) -> None:
    cost = params.cost_spec
    v_lo, v_hi = params.control_box
    if float(cost(0.0)) != 0.0:
        errors.append(ValidationError('cost_spec', 'a(0) must be 0', float(cost(0.0))))
    if v_hi <= v_lo:
        return
    generator = _witness_rng()
    v1 = generator.uniform(v_lo, v_hi, _SAMPLE_COUNT)
    v2 = generator.uniform(v_lo, v_hi, _SAMPLE_COUNT)
    separated = np.abs(v1 - v2) > 1e-6 * (v_hi - v_lo)
    gap = 0.5 * (cost(v1) + cost(v2)) - cost(0.5 * (v1 + v2))
    failing = separated & (gap <= 0.0)
    if np.any(failing):
        i = int(np.argmax(failing))
        errors.append(ValidationError('cost_spec', 'a must be strictly convex on K', (float(v1[i]), float(v2[i]))))


def validation_errors(params: ModelParams) -> List[ValidationError]:
    """Every violated standing assumption, each with the offending field and a witness."""
    errors = []  # type: List[ValidationError]
    for name in ('rho', 'zeta', 'chi', 'eps', 'horizon'):
        value = getattr(params, name)
        if not (math.isfinite(value) and value > 0.0):
            errors.append(ValidationError(name, '{} must be positive'.format(name), value))
    if not 0.0 < params.sigma < 1.0:
        errors.append(ValidationError('sigma', 'sigma out of (0,1)', params.sigma))
    if not 0.0 < params.gamma < 1.0:
        errors.append(ValidationError('gamma', 'gamma out of (0,1)', params.gamma))
    if not params.theta_lo > 0.0:
        errors.append(ValidationError('theta_lo', 'kernel violates θ > 0', params.theta_lo))
    elif params.theta_hi < params.theta_lo:
        errors.append(ValidationError('theta_hi', 'theta_hi below theta_lo', params.theta_hi))
    else:
        _check_kernel('kernel1', params.kernel1, params, errors)
        _check_kernel('kernel2', params.kernel2, params, errors)
    _check_production(params, errors)
    _check_amenity(params, errors)
    v_lo, v_hi = params.control_box
    if not (v_lo <= 0.0 <= v_hi) or v_lo == v_hi:
        errors.append(ValidationError('control_box', 'control set must satisfy v_lo <= 0 <= v_hi', params.control_box))
    _check_cost(params, errors)
    law = params.initial_law
    if isinstance(law, LogNormalInitialLaw):
        if not 0.0 <= law.zero_fraction <= 1.0:
            errors.append(ValidationError('initial_law', 'zero_fraction out of [0,1]', law.zero_fraction))
        if law.x_sd < 0.0 or law.log_h_sd < 0.0:
            errors.append(ValidationError('initial_law', 'standard deviations must be nonnegative',
                                          (law.x_sd, law.log_h_sd)))
    return errors


def validate(params: ModelParams) -> ModelParams:
    """Returns the (immutable) parameters when every standing assumption holds.

    :raises: ParamsValidationException  carrying the full list of violated invariants
    """
    errors = validation_errors(params)
    if errors:
        logger.debug('validation found %s violated invariants: %s', len(errors), errors)
        raise ParamsValidationException(errors)
    return params


def numerics_errors(numerics: NumericsParams) -> List[ValidationError]:
    errors = []  # type: List[ValidationError]
    if numerics.n_time < 2:
        errors.append(ValidationError('n_time', 'n_time must be >= 2', numerics.n_time))
    if numerics.n_x < 8 or numerics.n_y < 8:
        errors.append(ValidationError('grid', 'grid counts must be >= 8', (numerics.n_x, numerics.n_y)))
    if not numerics.x_min < numerics.x_max:
        errors.append(ValidationError('grid', 'x_min must be below x_max', (numerics.x_min, numerics.x_max)))
    if not numerics.y_min < numerics.y_max:
        errors.append(ValidationError('grid', 'y_min must be below y_max', (numerics.y_min, numerics.y_max)))
    if not 0.0 < numerics.damping <= 1.0:
        errors.append(ValidationError('damping', 'damping out of (0,1]', numerics.damping))
    for name in ('n_particles', 'mc_paths', 'max_iter', 'ot_cap', 'threads'):
        if getattr(numerics, name) < 1:
            errors.append(ValidationError(name, '{} must be positive'.format(name), getattr(numerics, name)))
    if numerics.tol_fp < 0.0:
        errors.append(ValidationError('tol_fp', 'tol_fp must be nonnegative', numerics.tol_fp))
    return errors


def validate_numerics(numerics: NumericsParams) -> NumericsParams:
    errors = numerics_errors(numerics)
    if errors:
        raise ParamsValidationException(errors)
    return numerics


def baseline_params(horizon: float = 1.0, zero_fraction: float = 0.0) -> ModelParams:
    return ModelParams(
        rho=0.1, zeta=0.1, chi=0.1, eps=0.1,
        gamma=0.5, sigma=0.5,
        theta_lo=1.0, theta_hi=2.0,
        kernel1=GaussianBumpKernel(theta=1.0, theta_cap=2.0, length=1.0),
        kernel2=GaussianBumpKernel(theta=1.0, theta_cap=2.0, length=1.0),
        f_spec=SaturatingProduction(beta=1.0, h_sat=10.0),
        A_spec=TanhAmenity(a_lo=0.5, a_hi=1.5, length=2.0),
        cost_spec=PolynomialCost(kappa=1.0, half_degree=1),
        control_box=(-1.0, 1.0),
        horizon=horizon,
        initial_law=LogNormalInitialLaw(x_mean=0.0, x_sd=0.5, log_h_mean=0.0, log_h_sd=0.25,
                                        zero_fraction=zero_fraction),
    )


DEFAULT_HORIZON_FRACTION = 0.8


def default_scenario() -> Tuple[ModelParams, NumericsParams]:
    """Canonical baseline: quadratic cost, saturating production, Gaussian-bump kernels,
    horizon at 80% of the admissible horizon of its own initial law."""
    numerics = NumericsParams()
    params = baseline_params()
    t_max = admissible_horizon(params, numerics)
    return params.replace(horizon=DEFAULT_HORIZON_FRACTION * t_max), numerics


def degenerate_scenario() -> Tuple[ModelParams, NumericsParams]:
    """Baseline with the whole population at zero capital."""
    params, numerics = default_scenario()
    law = LogNormalInitialLaw(**dict(params.initial_law.fields(), zero_fraction=1.0))
    return params.replace(initial_law=law), numerics


def sample_initial_measure(params: ModelParams, numerics: NumericsParams):
    """Stratified deterministic `n_particles`-atom sample of the initial law (uniform weights)."""
    from capmfg.measures import EmpiricalMeasure
    x, h = params.initial_law.stratified_sample(numerics.n_particles, numerics.seed)
    return EmpiricalMeasure.uniform(x, h)


def admissible_horizon(params: ModelParams, numerics: NumericsParams) -> float:
    """T_max of the scenario's initial law (may be +inf for a zero-capital population)."""
    from capmfg.dynamics import horizon_constants
    return horizon_constants(sample_initial_measure(params, numerics), params).T_max
