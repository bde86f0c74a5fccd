"""
[API] Backward solver of the Hamilton-Jacobi-Bellman equation of the representative firm on a
truncated grid in (x, y = log h), reconstruction of V, D_xV and D_hV, the feedback policy and a
Monte Carlo oracle for the value of any policy.

In the log variable the value w(t, x, y) = V(t, x, e^y) solves

    -w_t + rho w = eps^2/2 w_xx + chi^2/2 w_yy - chi^2/2 w_y + H0(w_x) + H1(x, e^y, mu(t), e^-y w_y),

stepped backward from w(T) = 0 with implicit diffusion and explicit monotone (Godunov) Hamiltonians.
"""

import logging
import math
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import factorized

from capmfg.dynamics import GradientField, Policy, c_constants, running_payoff, simulate_controlled
from capmfg.exceptions import CflViolationException, GridMismatchException, LinearSolveFailedException
from capmfg.hamiltonian import H0, dpH0, h1_terms, p0_core
from capmfg.interaction import interaction_sweep, sweep_nodes
from capmfg.measures import MeasureFlow, moment_M
from capmfg.params import ModelParams, NumericsParams

logger = logging.getLogger(__name__)

CFL_LIMIT = 0.9
REPAIR_TOLERANCE = 1e-10
SCHEME = 'backward-euler diffusion (sparse LU), explicit Godunov upwind Hamiltonians'
BOUNDARIES = {'x_min': 'neumann', 'x_max': 'neumann', 'y_min': 'dirichlet w=0', 'y_max': 'neumann'}


class ValueField(GradientField):
    """w on (times x x-nodes x y-nodes) with stored difference-quotient gradients dx_w, dy_w."""

    def __init__(self, times: np.ndarray, x_nodes: np.ndarray, y_nodes: np.ndarray, w: np.ndarray,
                 metadata: Optional[Dict[str, object]] = None, dx_w: Optional[np.ndarray] = None,
                 dy_w: Optional[np.ndarray] = None) -> None:
        if w.shape != (len(times), len(x_nodes), len(y_nodes)):
            raise GridMismatchException('value array of shape {} does not match grid ({}, {}, {})'.format(
                w.shape, len(times), len(x_nodes), len(y_nodes)))
        self.times = np.asarray(times, dtype=float)
        self.x_nodes = np.asarray(x_nodes, dtype=float)
        self.y_nodes = np.asarray(y_nodes, dtype=float)
        self.w = w
        self.dx_w = np.gradient(w, self.x_nodes, axis=1) if dx_w is None else dx_w
        self.dy_w = np.gradient(w, self.y_nodes, axis=2) if dy_w is None else dy_w
        self.metadata = dict(metadata or {})

    @staticmethod
    def zeros(times: np.ndarray, numerics: NumericsParams) -> 'ValueField':
        (x_min, x_max), (y_min, y_max), n_x, n_y = numerics.grid
        return ValueField(times, np.linspace(x_min, x_max, n_x), np.linspace(y_min, y_max, n_y),
                          np.zeros((len(times), n_x, n_y)))

    def __clamp(self, x: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int]:
        with np.errstate(divide='ignore'):
            y = np.log(h)
        xc = np.clip(x, self.x_nodes[0], self.x_nodes[-1])
        yc = np.clip(y, self.y_nodes[0], self.y_nodes[-1])
        clamped = int(np.count_nonzero((xc != x) | (yc != y)))
        return xc, yc, clamped

    def __slice(self, values: np.ndarray, index: int, xc: np.ndarray, yc: np.ndarray) -> np.ndarray:
        interpolator = RegularGridInterpolator((self.x_nodes, self.y_nodes), values[index], method='linear')
        return interpolator(np.column_stack([xc, yc]))

    def grid_gradients(self, time_index: int, x: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int]:
        """(D_xV, D_hV, clamped count) at a grid time; D_hV = e^-y dy_w at the clamped log-capital."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        h = np.atleast_1d(np.asarray(h, dtype=float))
        xc, yc, clamped = self.__clamp(x, h)
        dx = self.__slice(self.dx_w, time_index, xc, yc)
        dy = self.__slice(self.dy_w, time_index, xc, yc)
        return dx, np.exp(-yc) * dy, clamped

    def __time_weights(self, t: float) -> Tuple[int, int, float]:
        t = min(max(t, float(self.times[0])), float(self.times[-1]))
        upper = int(np.searchsorted(self.times, t, side='left'))
        if upper == 0:
            return 0, 0, 0.0
        lower = upper - 1
        return lower, upper, (t - float(self.times[lower])) / float(self.times[upper] - self.times[lower])

    def __at_time(self, values: np.ndarray, t: float, xc: np.ndarray, yc: np.ndarray) -> np.ndarray:
        lower, upper, theta = self.__time_weights(t)
        out = (1.0 - theta) * self.__slice(values, lower, xc, yc)
        if theta > 0.0:
            out = out + theta * self.__slice(values, upper, xc, yc)
        return out

    def value(self, t: float, x, h):
        """V(t, x, h), 0 at h = 0; linear in t between slices, bilinear in (x, y)."""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        hs = np.atleast_1d(np.asarray(h, dtype=float))
        positive = hs > 0.0
        out = np.zeros(len(xs))
        if np.any(positive):
            xc, yc, _ = self.__clamp(xs[positive], hs[positive])
            out[positive] = self.__at_time(self.w, t, xc, yc)
        return out if np.ndim(x) or np.ndim(h) else float(out[0])

    def gradients(self, t: float, x, h) -> Tuple[object, object, bool]:
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        hs = np.atleast_1d(np.asarray(h, dtype=float))
        xc, yc, clamped = self.__clamp(xs, hs)
        dx = self.__at_time(self.dx_w, t, xc, yc)
        dh = np.exp(-yc) * self.__at_time(self.dy_w, t, xc, yc)
        if np.ndim(x) or np.ndim(h):
            return dx, dh, clamped > 0
        return float(dx[0]), float(dh[0]), clamped > 0

    def with_values(self, w: np.ndarray) -> 'ValueField':
        return ValueField(self.times, self.x_nodes, self.y_nodes, w, self.metadata)

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "{name}[times={t}, n_x={nx}, n_y={ny}]".format(name=self.__class__.__name__, t=len(self.times),
                                                               nx=len(self.x_nodes), ny=len(self.y_nodes))


class FeedbackPolicy(Policy):
    """(t, x, h) -> (dpH0(D_xV), s_bar(x, h, mu(t), D_hV)) read off a value field."""

    def __init__(self, field: ValueField, mu_flow: MeasureFlow, params: ModelParams,
                 numerics: NumericsParams) -> None:
        if len(field.times) != len(mu_flow) or not np.allclose(field.times, mu_flow.times):
            raise GridMismatchException('value field and measure flow live on different time grids')
        self.field = field
        self.mu_flow = mu_flow
        self.params = params
        self.numerics = numerics

    def controls(self, time_index: int, t: float, x: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        h = np.asarray(h, dtype=float)
        positive = h > 0.0
        v = np.zeros(len(x))
        s = np.zeros(len(x))
        if np.any(positive):
            dxv, dhv, _ = self.field.grid_gradients(time_index, x[positive], h[positive])
            mu = self.mu_flow.at(time_index)
            sweep = interaction_sweep(mu, self.params, sweep_nodes(mu, self.numerics.x_min, self.numerics.x_max))
            xp, hp = x[positive], h[positive]
            terms = h1_terms(self.params.A_spec(xp), self.params.f_spec(hp), sweep(xp), hp, dhv, self.params)
            v[positive] = dpH0(dxv, self.params)
            s[positive] = terms.s_bar
        return v, s

    def __call__(self, t: float, x: float, h: float) -> Tuple[float, float]:
        v, s = self.controls(self.mu_flow.index_of(t), t, np.array([x]), np.array([h]))
        return float(v[0]), float(s[0])

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "FeedbackPolicy[{}]".format(self.field)


def feedback_policy(field: ValueField, mu_flow: MeasureFlow, params: ModelParams,
                    numerics: NumericsParams) -> FeedbackPolicy:
    return FeedbackPolicy(field, mu_flow, params, numerics)


def gradients(field: ValueField, t: float, x, h):
    """(D_xV, D_hV) by bilinear interpolation of stored difference quotients; queries outside the grid are clamped."""
    dx, dh, clamped = field.gradients(t, x, h)
    if clamped:
        logger.debug('gradient query (%s, %s, %s) clamped onto the grid', t, x, h)
    return dx, dh


# Monotone numerical Hamiltonians

def _godunov(h_minus, h_plus, q_minus, q_plus, q_star, hamiltonian):
    """Godunov flux of a convex Hamiltonian with minimizer q_star from the backward and forward differences."""
    upper = np.maximum(h_minus, h_plus)
    lower = hamiltonian(np.minimum(np.maximum(q_star, q_plus), q_minus))
    return np.where(q_minus <= q_plus, upper, lower)


def x_hamiltonian(q_minus: np.ndarray, q_plus: np.ndarray, params: ModelParams) -> np.ndarray:
    def hamiltonian(q):
        return H0(q, params)

    # 0 is in K and a(0) = 0, so H0 is minimal at 0
    return _godunov(hamiltonian(q_minus), hamiltonian(q_plus), q_minus, q_plus, 0.0, hamiltonian)


def y_hamiltonian(q_minus: np.ndarray, q_plus: np.ndarray, A, fh, Fv, h, params: ModelParams) -> np.ndarray:
    """Godunov flux of G(q) = H1(x, h, mu, q / h) - chi^2 q / 2 in the log-capital gradient q."""
    half_chi2 = 0.5 * params.chi ** 2

    def hamiltonian(q):
        return h1_terms(A, fh, Fv, h, q / h, params).value - half_chi2 * q

    p0, finite = p0_core(A, fh, Fv, params)
    need = params.zeta + half_chi2
    a_over_h = fh * Fv / h
    has_root = finite & (a_over_h > need)
    r = np.where(has_root, 1.0 - need / np.where(has_root, a_over_h, 1.0), 1.0)
    q_star = np.where(has_root, h * np.where(has_root, p0, 1.0) / r ** (1.0 - params.eta_exp), np.inf)
    return _godunov(hamiltonian(q_minus), hamiltonian(q_plus), q_minus, q_plus, q_star, hamiltonian)


def _one_sided(w: np.ndarray, step: float, axis: int) -> Tuple[np.ndarray, np.ndarray]:
    """Backward and forward differences; zero across the outer edges (homogeneous Neumann)."""
    diff = np.diff(w, axis=axis) / step
    pad_lo = [(0, 0)] * w.ndim
    pad_hi = [(0, 0)] * w.ndim
    pad_lo[axis] = (1, 0)
    pad_hi[axis] = (0, 1)
    return np.pad(diff, pad_lo), np.pad(diff, pad_hi)


def _second_difference(n: int, step: float, dirichlet_low: bool) -> sparse.csr_matrix:
    main = np.full(n, -2.0)
    lower = np.ones(n - 1)
    upper = np.ones(n - 1)
    upper[0] = 2.0
    lower[-1] = 2.0
    matrix = sparse.diags([lower, main, upper], [-1, 0, 1], format='lil')
    if dirichlet_low:
        matrix[0, :] = 0.0
    return matrix.tocsr() / step ** 2


def diffusion_operator(x_nodes: np.ndarray, y_nodes: np.ndarray, params: ModelParams) -> sparse.csr_matrix:
    """eps^2/2 D_xx + chi^2/2 D_yy on the row-major (x, y) grid; rows of the y_min boundary vanish."""
    n_x, n_y = len(x_nodes), len(y_nodes)
    dxx = _second_difference(n_x, x_nodes[1] - x_nodes[0], False)
    dyy = _second_difference(n_y, y_nodes[1] - y_nodes[0], True)
    boundary = sparse.diags(np.tile(np.r_[0.0, np.ones(n_y - 1)], n_x))
    return (0.5 * params.eps ** 2 * boundary @ sparse.kron(dxx, sparse.identity(n_y))
            + 0.5 * params.chi ** 2 * sparse.kron(sparse.identity(n_x), dyy)).tocsr()


def cfl_number(mu_flow: MeasureFlow, dx: float, dy: float, params: ModelParams) -> Tuple[float, float]:
    """A-priori CFL number of the explicit part and the drift rate sum max|v|/dx + max|y-drift|/dy."""
    max_mass = max(moment_M(m) for m in mu_flow.measures)
    y_drift = params.zeta + 0.5 * params.chi ** 2 + params.L_f * params.kernel_ratio * max_mass
    rate = params.B_bar / dx + y_drift / dy
    return mu_flow.dt * rate, rate


def _local_coefficients(mu, x_nodes, y_nodes, params: ModelParams, numerics: NumericsParams):
    sweep = interaction_sweep(mu, params, sweep_nodes(mu, numerics.x_min, numerics.x_max))
    h = np.exp(y_nodes)[None, :]
    A = params.A_spec(x_nodes)[:, None]
    Fv = sweep(x_nodes)[:, None]
    return A, params.f_spec(h), Fv, h


def hamiltonian_terms(w: np.ndarray, mu, x_nodes, y_nodes, params: ModelParams, numerics: NumericsParams):
    dx = x_nodes[1] - x_nodes[0]
    dy = y_nodes[1] - y_nodes[0]
    qx_minus, qx_plus = _one_sided(w, dx, 0)
    qy_minus, qy_plus = _one_sided(w, dy, 1)
    A, fh, Fv, h = _local_coefficients(mu, x_nodes, y_nodes, params, numerics)
    return x_hamiltonian(qx_minus, qx_plus, params) + y_hamiltonian(qy_minus, qy_plus, A, fh, Fv, h, params)


def _repair(w: np.ndarray) -> Tuple[np.ndarray, int, int]:
    """Clips negatives and monotonizes in y; counts nodes moved by more than the repair tolerance."""
    negative = int(np.count_nonzero(w < -REPAIR_TOLERANCE))
    clipped = np.maximum(w, 0.0)
    monotone = np.maximum.accumulate(clipped, axis=1)
    decreasing = int(np.count_nonzero(monotone - clipped > REPAIR_TOLERANCE))
    return monotone, negative, decreasing


def solve_hjb(mu_flow: MeasureFlow, params: ModelParams, numerics: NumericsParams) -> ValueField:
    """Backward sweep on the grid of `mu_flow`.

    :raises: CflViolationException  when the explicit part would violate the CFL bound (names the n_time needed)
    :raises: LinearSolveFailedException  when the implicit diffusion step fails or yields non-finite values
    """
    (x_min, x_max), (y_min, y_max), n_x, n_y = numerics.grid
    x_nodes = np.linspace(x_min, x_max, n_x)
    y_nodes = np.linspace(y_min, y_max, n_y)
    dt = mu_flow.dt
    cfl, rate = cfl_number(mu_flow, x_nodes[1] - x_nodes[0], y_nodes[1] - y_nodes[0], params)
    if cfl > CFL_LIMIT:
        raise CflViolationException(cfl, int(math.ceil(mu_flow.horizon * rate / CFL_LIMIT)))
    operator = diffusion_operator(x_nodes, y_nodes, params)
    system = ((1.0 / dt + params.rho) * sparse.identity(n_x * n_y) - operator).tocsc()
    try:
        solve = factorized(system)
    except (RuntimeError, ValueError) as e:
        raise LinearSolveFailedException('factorization of the implicit diffusion step failed') from e
    w = np.zeros((len(mu_flow), n_x, n_y))
    repairs = {'negative': 0, 'monotone': 0}
    for n in range(len(mu_flow) - 2, -1, -1):
        rhs = w[n + 1] / dt + hamiltonian_terms(w[n + 1], mu_flow.at(n), x_nodes, y_nodes, params, numerics)
        rhs[:, 0] = 0.0
        try:
            solution = solve(rhs.ravel()).reshape(n_x, n_y)
        except (RuntimeError, ValueError) as e:
            raise LinearSolveFailedException('implicit diffusion solve failed at step {}'.format(n)) from e
        if not np.all(np.isfinite(solution)):
            raise LinearSolveFailedException('non-finite values at step {}'.format(n))
        w[n], negative, decreasing = _repair(solution)
        repairs['negative'] += negative
        repairs['monotone'] += decreasing
        logger.debug('hjb step %s: max w = %s', n, float(w[n].max()))
    if repairs['negative'] or repairs['monotone']:
        logger.warning('hjb repairs: %s', repairs)
    metadata = {'scheme': SCHEME, 'boundaries': dict(BOUNDARIES), 'cfl': cfl, 'repairs': repairs}
    return ValueField(mu_flow.times, x_nodes, y_nodes, w, metadata)


def mc_value(t0: float, x0: float, h0: float, mu_flow: MeasureFlow, policy: Policy, params: ModelParams,
             numerics: NumericsParams, label: str = 'hjb/mc', n_paths: Optional[int] = None) -> Tuple[float, float]:
    """Monte Carlo estimate of J(t0, x0, h0; policy, mu) discounted from t0, with its standard error."""
    start = mu_flow.index_of(t0)
    bundle = simulate_controlled(x0, h0, policy, mu_flow, params, numerics, label=label, n_paths=n_paths,
                                 start_index=start)
    payoffs = running_payoff(bundle, mu_flow, params, numerics, start)
    if len(payoffs) < 2:
        return float(payoffs.mean()), 0.0
    return float(payoffs.mean()), float(payoffs.std(ddof=1) / math.sqrt(len(payoffs)))


def value_envelope(t0: float, h0: float, mu_flow: MeasureFlow, params: ModelParams) -> float:
    """Uniform bound of |V(t0, ., h0)| along the flow."""
    eta = params.eta_exp
    T = mu_flow.horizon
    m_bar = max(moment_M(m) for m in mu_flow.measures)
    c22 = c_constants(T, m_bar, params, 2)['C2']
    remaining = float(mu_flow.times[-1]) - t0
    discount = (1.0 - math.exp(-params.rho * remaining)) / params.rho
    local = params.A_hi ** (1.0 - params.sigma) * params.L_f ** eta \
        * (params.kernel_ratio * m_bar) ** (params.gamma * (1.0 - params.sigma)) / (1.0 - params.sigma)
    return local * discount * 2.0 ** eta * math.exp(eta * c22 * T / 2.0) * h0 ** eta


def weighted_gradient_bound(field: ValueField) -> float:
    """sup over the grid of |D_xV| + |h D_hV| (= |dx_w| + |dy_w|)."""
    return float(np.max(np.abs(field.dx_w) + np.abs(field.dy_w)))


def pde_residual(field: ValueField, mu_flow: MeasureFlow, params: ModelParams, numerics: NumericsParams,
                 margin: float = 0.2) -> Dict[str, float]:
    """Residual of the continuous equation at time midpoints, central differences in space,
    over interior nodes at least `margin` of the box away from the caps."""
    x, y = field.x_nodes, field.y_nodes
    dx, dy = x[1] - x[0], y[1] - y[0]
    ix = slice(max(int(margin * len(x)), 1), min(int((1.0 - margin) * len(x)), len(x) - 1))
    iy = slice(max(int(margin * len(y)), 1), min(int((1.0 - margin) * len(y)), len(y) - 1))
    worst = 0.0
    squares = []
    half_chi2 = 0.5 * params.chi ** 2
    for n in range(len(field.times) - 1):
        dt = float(field.times[n + 1] - field.times[n])
        mid = 0.5 * (field.w[n] + field.w[n + 1])
        w_t = (field.w[n + 1] - field.w[n]) / dt
        w_x = (mid[2:, 1:-1] - mid[:-2, 1:-1]) / (2.0 * dx)
        w_y = (mid[1:-1, 2:] - mid[1:-1, :-2]) / (2.0 * dy)
        w_xx = (mid[2:, 1:-1] - 2.0 * mid[1:-1, 1:-1] + mid[:-2, 1:-1]) / dx ** 2
        w_yy = (mid[1:-1, 2:] - 2.0 * mid[1:-1, 1:-1] + mid[1:-1, :-2]) / dy ** 2
        A, fh, Fv, h = _local_coefficients(mu_flow.at(n), x[1:-1], y[1:-1], params, numerics)
        hamiltonian = H0(w_x, params) + h1_terms(A, fh, Fv, h, w_y / h, params).value - half_chi2 * w_y
        residual = -w_t[1:-1, 1:-1] + params.rho * mid[1:-1, 1:-1] - 0.5 * params.eps ** 2 * w_xx \
            - half_chi2 * w_yy - hamiltonian
        box = residual[ix.start - 1:ix.stop - 1, iy.start - 1:iy.stop - 1]
        worst = max(worst, float(np.max(np.abs(box))))
        squares.append(float(np.mean(box ** 2)))
    return {'max': worst, 'rms': math.sqrt(sum(squares) / len(squares)) if squares else 0.0}
