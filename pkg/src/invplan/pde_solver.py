"""Monotone-iteration solver for the semilinear problem on balls.

Radially symmetric data reduces the ball problem to a two-point boundary
value problem in r:

    -u'' - ((N-1)/r) u' + (r^2/sigma^4) u + (2 alpha/sigma^2) u ln u = 0,
    u'(0) = 0,  u(R) = u_sub(R).

The radial Laplacian is discretised in conservative (flux) form, which keeps
-Lap_h an M-matrix for every N, with a ghost node u_{-1} = u_1 at the origin
so that Lap u(0) ~ 2 N (u_1 - u_0) / h^2.

Each step solves (-Lap_h + lam) u_new = lam u_old + F(u_old), where
lam = R^2/sigma^4 + 2 alpha/sigma^2 makes the right-hand side nondecreasing in u
on [u_sub(R), 1]. Started from the sub-solution the iterates increase, started
from 1 they decrease; both limits are returned as a bracket certificate.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import (BadGridSpec, BoundViolated, BracketTooWide, MaxItersExceeded,
                     MonotonicityViolated, NonPositiveNode)
from .model import closed_form_u, closed_form_z
from .subsuper import nonlinearity, sub_solution

__all__ = ['RadialGrid', 'DiscreteField', 'BallSolution', 'ValueField',
           'EstimateReport', 'NestedSolveResult', 'Grid2DSolution',
           'build_grid', 'solve_on_ball', 'nested_solve', 'discrete_residual',
           'discrete_residual_norm', 'to_value_function', 'check_estimates',
           'solve_full_grid_2d', 'monotone_shift',
           'TOL_ITER', 'TOL_BRACKET', 'MAX_ITERS', 'MONOTONE_SLACK']

TOL_ITER = 1e-12
TOL_BRACKET = 1e-8
MAX_ITERS = 10000
MONOTONE_SLACK = 1e-12


@dataclass(frozen=True)
class RadialGrid:
    radius: float
    n_nodes: int

    @property
    def h(self):
        return self.radius / (self.n_nodes - 1)

    @property
    def r(self):
        # i*h rather than linspace so nodes shared by nested grids coincide bitwise
        return np.arange(self.n_nodes) * self.h


def build_grid(R, n_nodes):
    if not (isinstance(n_nodes, (int, np.integer)) and n_nodes >= 3):
        raise BadGridSpec(f"n_nodes must be an integer >= 3, got {n_nodes!r}")
    if not (R > 0 and math.isfinite(R)):
        raise BadGridSpec(f"radius must be > 0, got {R!r}")
    return RadialGrid(float(R), int(n_nodes))


@dataclass
class DiscreteField:
    grid: RadialGrid
    u_values: np.ndarray


@dataclass
class BallSolution:
    field: DiscreteField
    iterations_from_sub: int
    iterations_from_super: int
    bracket_width: float
    residual_norm: float
    lambda_shift: float
    super_field: DiscreteField = None
    max_backstep_sub: float = 0.0      # largest downward move of a sub-seeded iterate
    max_backstep_super: float = 0.0    # largest upward move of a super-seeded iterate
    max_order_violation: float = 0.0   # largest sub-iterate minus super-iterate

    def certificate(self):
        return {
            'radius': self.field.grid.radius,
            'n_nodes': self.field.grid.n_nodes,
            'h': self.field.grid.h,
            'iterations_from_sub': self.iterations_from_sub,
            'iterations_from_super': self.iterations_from_super,
            'bracket_width': self.bracket_width,
            'residual_norm': self.residual_norm,
            'lambda_shift': self.lambda_shift,
            'max_backstep_sub': self.max_backstep_sub,
            'max_backstep_super': self.max_backstep_super,
            'max_order_violation': self.max_order_violation,
        }


@dataclass
class ValueField:
    grid: RadialGrid
    z_values: np.ndarray
    z_r_values: np.ndarray
    z_rr_values: np.ndarray
    u_values: np.ndarray = None


def monotone_shift(R, params):
    return R * R / params.s2 ** 2 + 2.0 * params.alpha / params.s2


def _flux_weights(grid, dim):
    """Off-diagonal weights of -Lap_h on rows 0..n-2 (row i couples i-1 and i+1)."""
    n, h = grid.n_nodes, grid.h
    r = grid.r
    lower = np.zeros(n - 1)
    upper = np.zeros(n - 1)
    upper[0] = 2.0 * dim / h ** 2
    i = np.arange(1, n - 1)
    if dim == 1:
        upper[1:] = 1.0 / h ** 2
        lower[1:] = 1.0 / h ** 2
    else:
        upper[1:] = ((r[i] + 0.5 * h) / r[i]) ** (dim - 1) / h ** 2
        lower[1:] = ((r[i] - 0.5 * h) / r[i]) ** (dim - 1) / h ** 2
    return lower, upper


def _neg_laplacian(u, lower, upper):
    """-Lap_h u on rows 0..n-2 of a full nodal vector u."""
    out = (lower + upper) * u[:-1] - upper * u[1:]
    out[1:] -= lower[1:] * u[:-2]
    return out


def discrete_residual(field, params):
    """G_h(u) at nodes 0..n-2 (every node but the Dirichlet one)."""
    if field.grid.n_nodes < 3:
        raise BadGridSpec("need at least 3 nodes")
    u = np.asarray(field.u_values, dtype=float)
    lower, upper = _flux_weights(field.grid, params.dim)
    return _neg_laplacian(u, lower, upper) - nonlinearity(u[:-1], field.grid.r[:-1], params)


def discrete_residual_norm(field, params):
    return float(np.max(np.abs(discrete_residual(field, params))))


def _bracket_iterate(step, lo, hi, tol_iter, max_iters):
    """Run the monotone iteration from lo (increasing) and hi (decreasing) in lockstep."""
    its = [0, 0]
    done = [False, False]
    back = [0.0, 0.0]
    order = float(np.max(lo - hi))
    cur = [lo, hi]
    sign = (1.0, -1.0)
    while not all(done):
        for j in (0, 1):
            if done[j]:
                continue
            new = step(cur[j])
            move = sign[j] * (new - cur[j])
            worst = float(-np.min(move))
            back[j] = max(back[j], worst)
            if worst > MONOTONE_SLACK:
                which = 'sub' if j == 0 else 'super'
                raise MonotonicityViolated(
                    f"{which}-seeded iterate {its[j] + 1} moved the wrong way by {worst:.3e}")
            its[j] += 1
            change = float(np.max(np.abs(new - cur[j])))
            cur[j] = new
            if change <= tol_iter:
                done[j] = True
            elif its[j] >= max_iters:
                raise MaxItersExceeded(
                    f"no convergence after {max_iters} iterations (last change {change:.3e})")
        order = max(order, float(np.max(cur[0] - cur[1])))
    if order > MONOTONE_SLACK:
        raise MonotonicityViolated(f"sub-seeded iterate exceeded super-seeded by {order:.3e}")
    return cur[0], cur[1], its, back, order


def solve_on_ball(grid, params, tol_iter=TOL_ITER, tol_bracket=TOL_BRACKET,
                  max_iters=MAX_ITERS):
    if not (tol_iter > 0 and tol_bracket > 0):
        raise ValueError("tolerances must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    r = grid.r
    lam = monotone_shift(grid.radius, params)
    lower, upper = _flux_weights(grid, params.dim)
    m = grid.n_nodes - 1
    ab = np.zeros((3, m))
    ab[0, 1:] = -upper[:-1]
    ab[1] = lower + upper + lam
    ab[2, :-1] = -lower[1:]
    g = float(sub_solution(grid.radius, params))
    r_in = r[:-1]
    bc = upper[-1] * g

    def step(u):
        rhs = lam * u[:-1] + nonlinearity(u[:-1], r_in, params)
        rhs[-1] += bc
        out = np.empty_like(u)
        out[:-1] = scipy.linalg.solve_banded((1, 1), ab, rhs, check_finite=False)
        out[-1] = g
        return out

    lo = sub_solution(r, params)
    hi = np.ones_like(r)
    u_lo, u_hi, its, back, order = _bracket_iterate(step, lo, hi, tol_iter, max_iters)
    width = float(np.max(np.abs(u_hi - u_lo)))
    fld = DiscreteField(grid, u_lo)
    sol = BallSolution(field=fld, iterations_from_sub=its[0], iterations_from_super=its[1],
                       bracket_width=width, residual_norm=discrete_residual_norm(fld, params),
                       lambda_shift=lam, super_field=DiscreteField(grid, u_hi),
                       max_backstep_sub=back[0], max_backstep_super=back[1],
                       max_order_violation=order)
    if width > tol_bracket:
        raise BracketTooWide(f"bracket width {width:.3e} exceeds {tol_bracket:.3e}")
    return sol


def to_value_function(field, params):
    u = np.asarray(field.u_values, dtype=float)
    bad = np.flatnonzero(~(u > 0))
    if bad.size:
        raise NonPositiveNode(f"u <= 0 at node {bad[0]} (r={field.grid.r[bad[0]]!r})")
    h = field.grid.h
    z = -2.0 * params.s2 * np.log(u)
    z_r = np.gradient(z, h, edge_order=2)
    z_r[0] = 0.0
    z_rr = np.empty_like(z)
    z_rr[1:-1] = (z[2:] - 2.0 * z[1:-1] + z[:-2]) / h ** 2
    z_rr[0] = 2.0 * (z[1] - z[0]) / h ** 2
    if z.size >= 4:
        z_rr[-1] = (2.0 * z[-1] - 5.0 * z[-2] + 4.0 * z[-3] - z[-4]) / h ** 2
    else:
        z_rr[-1] = z_rr[-2]
    return ValueField(field.grid, z, z_r, z_rr, u)


@dataclass
class EstimateReport:
    upper_bound_ok: bool
    lower_bound_ok: bool
    gradient_constant_C: float
    gradient_constant_inner: float   # same, restricted to r <= R/2 (away from the boundary layer)
    convexity_min: float
    convexity_ok: bool
    worst_upper_excess: float
    worst_upper_node: int
    min_z: float
    min_z_node: int

    @property
    def ok(self):
        return self.upper_bound_ok and self.lower_bound_ok and self.convexity_ok

    def to_dict(self):
        return dict(self.__dict__)


def check_estimates(value_field, params, tol=1e-8, convexity_tol=1e-6, strict=False):
    """Check 0 <= z <= r^2 + 1 + N sigma^2/alpha, convexity and linear gradient growth.

    With strict=True a failed check raises BoundViolated naming the worst node.
    """
    r = value_field.grid.r
    z = value_field.z_values
    z_r = value_field.z_r_values
    cap = r * r + 1.0 + params.dim * params.s2 / params.alpha
    excess = z - cap
    i_up = int(np.argmax(excess))
    i_lo = int(np.argmin(z))
    upper_ok = bool(excess[i_up] <= tol)
    lower_ok = bool(z[i_lo] >= -tol)
    growth = np.abs(z_r) / (1.0 + r)
    C = float(np.max(growth))
    C_inner = float(np.max(growth[r <= 0.5 * r[-1]]))
    conv = min(float(np.min(value_field.z_rr_values)), float(np.min(z_r[1:] / r[1:])))
    conv_ok = bool(conv >= -convexity_tol)
    rep = EstimateReport(upper_ok, lower_ok, C, C_inner, conv, conv_ok,
                         float(excess[i_up]), i_up, float(z[i_lo]), i_lo)
    if strict:
        if not upper_ok:
            raise BoundViolated(f"z exceeds quadratic bound by {excess[i_up]:.3e} at r={r[i_up]}",
                                i_up, r[i_up], z[i_up])
        if not lower_ok:
            raise BoundViolated(f"z = {z[i_lo]:.3e} < 0 at r={r[i_lo]}", i_lo, r[i_lo], z[i_lo])
        if not conv_ok:
            i = int(np.argmin(np.minimum(value_field.z_rr_values,
                                         np.r_[np.inf, z_r[1:] / r[1:]])))
            raise BoundViolated(f"convexity fails ({conv:.3e}) near r={r[i]}", i, r[i], z[i])
        if not math.isfinite(C):
            raise BoundViolated("gradient growth constant is not finite")
    return rep


@dataclass
class NestedSolveResult:
    radii: list
    h: float
    solutions: list
    value_fields: list
    inner_diffs: list          # sup_{r <= radii[0]} |z_{j+1} - z_j|
    oracle_errors: list = field(default_factory=list)     # sup |z_j - z_exact|, r <= compare_radius
    oracle_errors_u: list = field(default_factory=list)   # same in u
    compare_radius: float = None

    @property
    def final(self):
        return self.solutions[-1]


def nested_solve(radii, n_per_unit, params, tol_iter=TOL_ITER, tol_bracket=TOL_BRACKET,
                 max_iters=MAX_ITERS, compare_radius=None, workers=1):
    """Solve on balls of increasing radius at a common spacing h = 1/n_per_unit."""
    radii = [float(R) for R in radii]
    if len(radii) < 2 or any(b <= a for a, b in zip(radii, radii[1:])):
        raise BadGridSpec(f"radii must be strictly increasing with >= 2 entries, got {radii}")
    grids = []
    for R in radii:
        cells = R * n_per_unit
        if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
            raise BadGridSpec(f"radius {R} is not a multiple of h = 1/{n_per_unit}")
        grids.append(build_grid(R, int(round(cells)) + 1))

    def run(g):
        return solve_on_ball(g, params, tol_iter, tol_bracket, max_iters)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            sols = list(ex.map(run, grids))
    else:
        sols = [run(g) for g in grids]
    vfs = [to_value_function(s.field, params) for s in sols]
    n0 = grids[0].n_nodes
    diffs = [float(np.max(np.abs(b.z_values[:n0] - a.z_values[:n0])))
             for a, b in zip(vfs, vfs[1:])]
    res = NestedSolveResult(radii, 1.0 / n_per_unit, sols, vfs, diffs)
    if params.oracle_available:
        rc = radii[0] if compare_radius is None else compare_radius
        res.compare_radius = rc
        for s in sols:
            res.oracle_errors.append(oracle_error(s, params, rc, 'z'))
            res.oracle_errors_u.append(oracle_error(s, params, rc, 'u'))
    return res


def oracle_error(solution, params, radius, quantity='u'):
    """sup over r <= radius of the difference between a radial solve and the closed form."""
    r = solution.field.grid.r
    k = r <= radius + 1e-12
    if quantity == 'u':
        return float(np.max(np.abs(solution.field.u_values[k] - closed_form_u(r[k], params))))
    z = -2.0 * params.s2 * np.log(solution.field.u_values[k])
    return float(np.max(np.abs(z - closed_form_z(r[k], params))))


@dataclass
class Grid2DSolution:
    x: np.ndarray
    u: np.ndarray                 # (n, n), u[i, j] at (x[i], x[j])
    iterations_from_sub: int
    iterations_from_super: int
    bracket_width: float
    lambda_shift: float
    radial_agreement: float
    symmetry_error: float
    compare_radius: float
    oracle_agreement: float = None


def solve_full_grid_2d(L, n_per_axis, params, tol_iter=TOL_ITER, tol_bracket=TOL_BRACKET,
                       max_iters=MAX_ITERS, compare_radius=None, radial_h=5e-3):
    """Five-point solve on [-L, L]^2 with u = u_sub on the boundary (N = 2 only)."""
    if params.dim != 2:
        raise BadGridSpec(f"full-grid solve is two-dimensional; params.dim = {params.dim}")
    if n_per_axis < 3:
        raise BadGridSpec("n_per_axis must be >= 3")
    x = np.linspace(-L, L, n_per_axis)
    h = x[1] - x[0]
    X, Y = np.meshgrid(x, x, indexing='ij')
    rho = np.hypot(X, Y)
    lam = monotone_shift(math.sqrt(2.0) * L, params)
    m = n_per_axis - 2
    T = sp.diags([-np.ones(m - 1), 2.0 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1]) / h ** 2
    I = sp.identity(m)
    A = (sp.kron(T, I) + sp.kron(I, T) + lam * sp.identity(m * m)).tocsc()
    lu = splu(A)
    ub = sub_solution(rho, params)
    edge = ub.copy()
    edge[1:-1, 1:-1] = 0.0
    bc = (edge[2:, 1:-1] + edge[:-2, 1:-1] + edge[1:-1, 2:] + edge[1:-1, :-2]) / h ** 2
    r_in = rho[1:-1, 1:-1]

    def step(u):
        ui = u[1:-1, 1:-1]
        rhs = lam * ui + nonlinearity(ui, r_in, params) + bc
        out = ub.copy()
        out[1:-1, 1:-1] = lu.solve(rhs.ravel()).reshape(m, m)
        return out

    u_lo, u_hi, its, _, _ = _bracket_iterate(step, ub.copy(), np.ones_like(ub), tol_iter,
                                             max_iters)
    width = float(np.max(np.abs(u_hi - u_lo)))
    if width > tol_bracket:
        raise BracketTooWide(f"bracket width {width:.3e} exceeds {tol_bracket:.3e}")
    rc = L / 2.0 if compare_radius is None else compare_radius
    n_rad = int(round(L / radial_h)) + 1
    radial = solve_on_ball(build_grid(L, n_rad), params, tol_iter, tol_bracket, max_iters)
    k = rho <= rc + 1e-12
    u_rad = np.interp(rho[k], radial.field.grid.r, radial.field.u_values)
    agree = float(np.max(np.abs(u_lo[k] - u_rad)))
    sym = float(np.max(np.abs(u_lo - u_lo.T)))
    res = Grid2DSolution(x, u_lo, its[0], its[1], width, lam, agree, sym, rc)
    if params.oracle_available:
        res.oracle_agreement = float(np.max(np.abs(u_lo[k] - closed_form_u(rho[k], params))))
    return res
