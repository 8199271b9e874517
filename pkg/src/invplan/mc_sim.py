"""Euler-Maruyama simulation of the controlled inventory and verification diagnostics.

Inventory dynamics (zero demand deviation):

    dy = p(y) dt + sigma dw,   y(0) = y0

Cost (unit cost coefficients, zero targets):

    J = E int_0^T exp(-alpha t) (|p(y_t)|^2 + |y_t|^2) dt

and the verification process, with U = -z,

    M(t) = exp(-alpha t) U(y_t) - int_0^t exp(-alpha s) (|p|^2 + |y|^2) ds.

All policies passed to one simulation share the same noise (common random
numbers), and each path's noise depends only on (master_seed, path index).
"""
from dataclasses import dataclass
import math
import warnings

import numpy as np
from numba import njit
from scipy.interpolate import PchipInterpolator

from .errors import DiagnosticWarning, StateOutsideGrid
from .model import ClosedFormSolution
from .pde_solver import ValueField
from .policy import value_at
from .rng import master_key, normal_pair, path_key

__all__ = ['SimConfig', 'PathStats', 'CostEstimate', 'DtBias', 'MartingaleSeries',
           'MomentFit', 'TransversalityReport', 'PolicyComparison',
           'default_horizon', 'simulate_paths', 'simulate_policies', 'estimate_cost',
           'measure_dt_bias', 'martingale_diagnostic', 'transversality_and_moment_check',
           'compare_policies', 'CI_MULT', 'EXIT_FRACTION_LIMIT']

CI_MULT = 3.0
EXIT_FRACTION_LIMIT = 1e-3


@dataclass(frozen=True)
class SimConfig:
    y0: tuple
    horizon: float
    dt: float
    n_paths: int
    master_seed: int
    checkpoint_times: tuple = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, 'y0', tuple(float(v) for v in np.atleast_1d(self.y0)))
        object.__setattr__(self, 'checkpoint_times',
                           tuple(sorted(float(t) for t in self.checkpoint_times)))
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        if not self.horizon >= 0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon!r}")
        if self.n_paths < 2:
            raise ValueError(f"n_paths must be >= 2, got {self.n_paths!r}")
        if self.checkpoint_times and (self.checkpoint_times[0] < 0
                                      or self.checkpoint_times[-1] > self.horizon + 1e-12):
            raise ValueError("checkpoint times must lie in [0, horizon]")
        for t in self.checkpoint_times + (self.horizon,):
            k = t / self.dt
            if abs(k - round(k)) > 1e-6:
                raise ValueError(f"time {t} is not a multiple of dt = {self.dt}")

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt))

    def to_dict(self):
        return {'y0': list(self.y0), 'horizon': self.horizon, 'dt': self.dt,
                'n_paths': self.n_paths, 'master_seed': self.master_seed,
                'checkpoint_times': list(self.checkpoint_times)}


def default_horizon(params, y0, tail=1e-4):
    """Smallest T with exp(-alpha T) (|y0|^2 + 1 + N sigma^2 / alpha) < tail."""
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    env = float(y0 @ y0) + 1.0 + params.dim * params.s2 / params.alpha
    return max(0.0, math.log(env / tail) / params.alpha)


_LINEAR, _RADIAL = 0, 1


def _kernel_tables(policies):
    P = len(policies)
    kinds = np.zeros(P, np.int64)
    gains = np.zeros(P)
    radii = np.full(P, np.inf)
    hs = np.ones(P)
    firsts = np.zeros(P)
    ncells = np.ones(P, np.int64)
    fields = [p for p in policies if p.kind != 'zero' and isinstance(p.source, ValueField)]
    M = max([vf.source.grid.n_nodes - 1 for vf in fields], default=1)
    coefs = np.zeros((P, 4, M))
    for i, pol in enumerate(policies):
        if pol.kind == 'zero':
            continue
        src = pol.source
        if isinstance(src, ClosedFormSolution):
            gains[i] = -pol.factor * src.z_coeff
        else:
            kinds[i] = _RADIAL
            gains[i] = -0.5 * pol.factor
            g = src.grid
            c = PchipInterpolator(g.r, src.z_r_values).c
            coefs[i, :, :c.shape[1]] = c
            ncells[i] = c.shape[1]
            radii[i] = g.radius
            hs[i] = g.h
            firsts[i] = src.z_r_values[1]
    return kinds, gains, radii, hs, firsts, coefs, ncells


@njit(cache=True, error_model='numpy')
def _em_kernel(key, n_paths, y0, n_steps, dt, substeps, sigma, disc, ck_idx,
               kinds, gains, radii, hs, firsts, coefs, ncells,
               y_ck, cost_ck, cost_T, exit_step):
    """Euler-Maruyama for P policies on shared noise, one path at a time.

    Policy i is p = gains[i] * y when kinds[i] == 0, otherwise
    p = gains[i] * z_r(|y|) * y / |y| with z_r a piecewise cubic on a uniform
    grid of spacing hs[i] (linear inside the first cell). Step k = -1 only
    evaluates the policy at y0.
    """
    P = kinds.shape[0]
    N = y0.shape[0]
    C = ck_idx.shape[0]
    y = np.empty((P, N))
    p = np.empty((P, N))
    y_new = np.empty(N)
    noise = np.zeros(N)
    g_prev = np.empty(P)
    cost = np.empty(P)
    alive = np.empty(P, np.bool_)
    vol = sigma * math.sqrt(dt / substeps)
    for path in range(n_paths):
        pk = path_key(key, path)
        q = 0    # uniform counter of this path's stream
        have_spare = False
        spare = 0.0
        c = 0
        for i in range(P):
            cost[i] = 0.0
            alive[i] = True
            exit_step[i, path] = -1
            for d in range(N):
                y[i, d] = y0[d]
                p[i, d] = 0.0
        for d in range(N):
            noise[d] = 0.0
        for k in range(-1, n_steps):
            step = 0.0
            if k >= 0:
                step = dt
                for d in range(N):
                    noise[d] = 0.0
                for _ in range(substeps):
                    for d in range(N):
                        if have_spare:
                            noise[d] += spare
                            have_spare = False
                        else:
                            a, b, q = normal_pair(pk, q)
                            noise[d] += a
                            spare = b
                            have_spare = True
            dk = disc[k + 1]
            for i in range(P):
                if not alive[i]:
                    continue
                r2 = 0.0
                for d in range(N):
                    y_new[d] = y[i, d] + p[i, d] * step + vol * noise[d]
                    r2 += y_new[d] * y_new[d]
                if kinds[i] == 0:
                    s = gains[i]
                else:
                    r = math.sqrt(r2)
                    if r > radii[i]:
                        # path left the policy grid: freeze at the last admissible state
                        alive[i] = False
                        exit_step[i, path] = k + 1
                        continue
                    h = hs[i]
                    if r < h:
                        s = gains[i] * firsts[i] / h
                    else:
                        j = min(int(r / h), ncells[i] - 1)
                        dr = r - j * h
                        zr = ((coefs[i, 0, j] * dr + coefs[i, 1, j]) * dr
                              + coefs[i, 2, j]) * dr + coefs[i, 3, j]
                        s = gains[i] * zr / r
                pp = 0.0
                for d in range(N):
                    y[i, d] = y_new[d]
                    p[i, d] = s * y_new[d]
                    pp += p[i, d] * p[i, d]
                g = dk * (pp + r2)
                if k >= 0:
                    cost[i] += 0.5 * dt * (g_prev[i] + g)
                g_prev[i] = g
            while c < C and ck_idx[c] == k + 1:
                for i in range(P):
                    for d in range(N):
                        y_ck[i, path, c, d] = y[i, d]
                    cost_ck[i, path, c] = cost[i]
                c += 1
        for i in range(P):
            cost_T[i, path] = cost[i]


@dataclass
class PathStats:
    """Per-path output of one simulation under one policy."""
    policy_label: str
    times: np.ndarray           # checkpoint times, horizon always included
    y: np.ndarray               # (n_paths, n_checkpoints, N)
    running_cost: np.ndarray    # (n_paths, n_checkpoints) discounted cost integral to t_j
    cost: np.ndarray            # (n_paths,) integral over [0, T]
    exit_step: np.ndarray       # (n_paths,) step of grid exit, -1 if none
    config: SimConfig = None
    substeps: int = 1

    @property
    def n_paths(self):
        return self.cost.shape[0]

    @property
    def exit_count(self):
        return int(np.count_nonzero(self.exit_step >= 0))

    def index(self, t):
        j = np.flatnonzero(np.abs(self.times - t) <= 1e-9 * max(1.0, t))
        if j.size == 0:
            raise KeyError(f"time {t} is not a checkpoint")
        return int(j[0])

    def second_moment(self):
        """mean |y_t|^2 and its standard error at every checkpoint."""
        sq = np.sum(self.y ** 2, axis=2)
        return sq.mean(axis=0), _stderr(sq, axis=0)


def _stderr(a, axis=0):
    n = a.shape[axis]
    return np.std(a, axis=axis, ddof=1) / math.sqrt(n)


def _run(policies, config, params, dt=None, substeps=1, n_paths=None):
    y0 = np.asarray(config.y0, dtype=float)
    if y0.size != params.dim:
        raise ValueError(f"y0 has {y0.size} components, model has dim {params.dim}")
    for pol in policies:
        if np.linalg.norm(y0) > pol.radius:
            raise StateOutsideGrid(f"y0 lies outside the grid of policy {pol.label}")
    dt = config.dt if dt is None else dt
    n_paths = config.n_paths if n_paths is None else n_paths
    n_steps = int(round(config.horizon / dt))
    times = np.array(sorted(set(config.checkpoint_times) | {config.horizon}))
    ck_idx = np.rint(times / dt).astype(np.int64)
    disc = np.exp(-params.alpha * dt * np.arange(n_steps + 1))
    tables = _kernel_tables(policies)
    P, N, C = len(policies), params.dim, times.size
    y_ck = np.empty((P, n_paths, C, N))
    cost_ck = np.empty((P, n_paths, C))
    cost_T = np.empty((P, n_paths))
    exit_step = np.empty((P, n_paths), np.int64)
    _em_kernel(master_key(config.master_seed), n_paths, y0, n_steps, float(dt), int(substeps),
               float(params.sigma), disc, ck_idx, *tables, y_ck, cost_ck, cost_T, exit_step)
    out = []
    for i, pol in enumerate(policies):
        st = PathStats(pol.label, times, y_ck[i], cost_ck[i], cost_T[i], exit_step[i],
                       config, substeps)
        if st.exit_count > EXIT_FRACTION_LIMIT * n_paths:
            warnings.warn(f"{st.exit_count} of {n_paths} paths left the grid of policy "
                          f"{pol.label}", DiagnosticWarning, stacklevel=3)
        out.append(st)
    return out


def simulate_policies(policies, config, params):
    """Simulate several policies on common random numbers."""
    return _run(list(policies), config, params)


def simulate_paths(policy, config, params):
    return _run([policy], config, params)[0]


@dataclass
class CostEstimate:
    mean: float
    std_error: float
    truncation_bound: float
    n_paths: int
    exit_count: int
    policy_label: str = ''

    @property
    def exit_flagged(self):
        return self.exit_count > EXIT_FRACTION_LIMIT * self.n_paths

    def to_dict(self):
        return {'policy': self.policy_label, 'mean': self.mean, 'std_error': self.std_error,
                'truncation_bound': self.truncation_bound, 'n_paths': self.n_paths,
                'exit_count': self.exit_count}


def _cost_estimate(stats, params):
    cfg = stats.config
    m2, _ = stats.second_moment()
    env = float(m2[stats.index(cfg.horizon)]) + 1.0 + params.dim * params.s2 / params.alpha
    bound = math.exp(-params.alpha * cfg.horizon) * env
    if bound > 1e-4:
        warnings.warn(f"discarded tail beyond T={cfg.horizon} may reach {bound:.3e}",
                      DiagnosticWarning, stacklevel=3)
    return CostEstimate(float(stats.cost.mean()), float(_stderr(stats.cost)), bound,
                        stats.n_paths, stats.exit_count, stats.policy_label)


def estimate_cost(policy, config, params, stats=None):
    """Trapezoid estimate of the discounted cost over [0, T].

    The tail beyond T is bounded with the quadratic envelope of the value
    function, exp(-alpha T) (E|y_T|^2 + 1 + N sigma^2 / alpha), and reported
    separately rather than added to the mean.
    """
    if stats is None:
        stats = simulate_paths(policy, config, params)
    return _cost_estimate(stats, params)


@dataclass
class DtBias:
    dt: float
    cost_dt: float
    cost_half: float
    bias: float          # estimated weak error of the cost at step dt
    bias_se: float
    kappa: float         # bias / dt
    n_paths: int


def measure_dt_bias(policy, config, params, n_paths=None):
    """Weak error of the cost at step dt, by Richardson with dt/2 on coupled noise.

    The coarse run sums pairs of the fine run's Brownian increments, so the
    per-path difference has small variance. With first weak order,
    bias(dt) ~ 2 (J(dt) - J(dt/2)).
    """
    coarse = _run([policy], config, params, dt=config.dt, substeps=2, n_paths=n_paths)[0]
    fine = _run([policy], config, params, dt=config.dt / 2, substeps=1, n_paths=n_paths)[0]
    diff = coarse.cost - fine.cost
    bias = 2.0 * float(diff.mean())
    return DtBias(config.dt, float(coarse.cost.mean()), float(fine.cost.mean()), bias,
                  2.0 * float(_stderr(diff)), bias / config.dt, coarse.n_paths)


@dataclass
class MartingaleSeries:
    times: np.ndarray
    mean: np.ndarray
    std_error: np.ndarray
    slope: float
    slope_se: float
    ci_mult: float = CI_MULT

    @property
    def slope_ci(self):
        return (self.slope - self.ci_mult * self.slope_se, self.slope + self.ci_mult * self.slope_se)

    @property
    def ci_contains_zero(self):
        lo, hi = self.slope_ci
        return lo <= 0.0 <= hi

    @property
    def ci_negative(self):
        return self.slope_ci[1] < 0.0


def _value_source(policy, value_source):
    if value_source is not None:
        return value_source
    if policy.source is None:
        raise ValueError("zero policy carries no value function; pass value_source")
    return policy.source


def martingale_diagnostic(policy, config, params, value_source=None, stats=None, times=None):
    """Mean of M(t_j) = -exp(-alpha t_j) z(y_{t_j}) - running cost, per checkpoint.

    The slope is an ordinary least-squares fit of M against t computed path by
    path, so its standard error accounts for correlation between checkpoints.
    """
    src = _value_source(policy, value_source)
    if stats is None:
        stats = simulate_paths(policy, config, params)
    t_all = stats.times
    if times is None:
        times = config.checkpoint_times
    idx = [stats.index(t) for t in times]
    t = t_all[idx]
    r = np.linalg.norm(stats.y[:, idx, :], axis=2)
    M = -np.exp(-params.alpha * t) * value_at(src, r) - stats.running_cost[:, idx]
    tc = t - t.mean()
    slopes = M @ tc / float(tc @ tc)
    return MartingaleSeries(t, M.mean(axis=0), _stderr(M, axis=0), float(slopes.mean()),
                            float(_stderr(slopes)))


@dataclass
class MomentFit:
    C1: float
    C2: float
    residual: float     # RMS residual of the unconstrained log-linear fit


@dataclass
class TransversalityReport:
    times: np.ndarray
    series: np.ndarray            # exp(-alpha t) mean |y_t|^2
    second_moment: np.ndarray
    second_moment_se: np.ndarray
    moment_fit: MomentFit

    def majorizes(self):
        bound = self.moment_fit.C1 * np.exp(self.moment_fit.C2 * self.times)
        return bool(np.all(bound >= self.second_moment))


def fit_moment_bound(times, m2):
    """(C1, C2) with C1 exp(C2 t) >= m2 at every t, from a least-squares fit of log m2.

    Zero moments (deterministic start) are dropped from the fit; they are
    majorized by any C1 > 0. C2 is clipped at 0 since the bound is a growth
    estimate.
    """
    times = np.asarray(times, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    k = m2 > 0
    if np.count_nonzero(k) == 0:
        return MomentFit(np.finfo(float).tiny, 0.0, 0.0)
    t, lm = times[k], np.log(m2[k])
    if t.size >= 2 and np.ptp(t) > 0:
        C2, a = np.polyfit(t, lm, 1)
        resid = float(np.sqrt(np.mean((lm - a - C2 * t) ** 2)))
    else:
        C2, a, resid = 0.0, float(lm[0]), 0.0
    C2 = max(float(C2), 0.0)
    a = float(np.max(lm - C2 * t))
    # tiny upward nudge so the bound holds after exp/log round-off
    return MomentFit(math.exp(a) * (1.0 + 1e-12), C2, resid)


def transversality_and_moment_check(policy, config, params, stats=None):
    if stats is None:
        stats = simulate_paths(policy, config, params)
    idx = [stats.index(t) for t in config.checkpoint_times]
    t = stats.times[idx]
    positive = t[t > 0]
    if positive.size and positive.max() < 10.0 * positive.min():
        warnings.warn("checkpoints span less than a decade of time scales",
                      DiagnosticWarning, stacklevel=2)
    m2, se = stats.second_moment()
    m2, se = m2[idx], se[idx]
    return TransversalityReport(t, np.exp(-params.alpha * t) * m2, m2, se,
                                fit_moment_bound(t, m2))


@dataclass
class PolicyComparison:
    rows: list                          # CostEstimate, sorted by mean
    labels: list                        # labels in input order
    diff_mean: np.ndarray               # [a, b] = mean(J_a - J_b), input order
    diff_se: np.ndarray

    def difference(self, a, b):
        i, j = self.labels.index(a), self.labels.index(b)
        return float(self.diff_mean[i, j]), float(self.diff_se[i, j])


def compare_policies(policies, config, params, stats=None):
    """Costs of several policies on common random numbers, with paired differences."""
    policies = list(policies)
    if len(policies) < 2:
        raise ValueError("need at least two policies to compare")
    if stats is None:
        stats = simulate_policies(policies, config, params)
    labels = [st.policy_label for st in stats]
    if len(set(labels)) != len(labels):
        labels = [f'{lab}#{i}' for i, lab in enumerate(labels)]
    ests = [_cost_estimate(st, params) for st in stats]
    for e, lab in zip(ests, labels):
        e.policy_label = lab
    P = len(stats)
    dm = np.zeros((P, P))
    ds = np.zeros((P, P))
    for i in range(P):
        for j in range(P):
            d = stats[i].cost - stats[j].cost
            dm[i, j] = d.mean()
            ds[i, j] = _stderr(d)
    order = sorted(range(P), key=lambda i: (ests[i].mean, i))
    return PolicyComparison([ests[i] for i in order], labels, dm, ds)
