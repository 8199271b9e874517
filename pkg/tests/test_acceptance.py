"""Acceptance criteria at full scale; each test records a PASS/FAIL line.

The lines are printed in a dedicated section of the pytest terminal summary.
"""
import json
import time

import numpy as np
import pytest

from invplan.cli import main
from invplan.mc_sim import (SimConfig, compare_policies, estimate_cost, martingale_diagnostic,
                            measure_dt_bias, simulate_policies, transversality_and_moment_check)
from invplan.model import closed_form_m, closed_form_pde_residual, validate_params
from invplan.pde_solver import (build_grid, check_estimates, nested_solve, oracle_error,
                                solve_full_grid_2d, solve_on_ball)
from invplan.policy import Policy

Z0 = 0.6180340


@pytest.fixture(scope='module')
def nested(p111):
    t = time.perf_counter()
    res = nested_solve([3, 4, 5, 6], 200, p111, compare_radius=2.0)
    return res, time.perf_counter() - t


@pytest.fixture(scope='module')
def mc(p111):
    """One joint run of four policies on common random numbers."""
    opt = Policy.closed_form(p111)
    family = [opt, Policy.zero(), opt.scaled(0.5), opt.scaled(1.5)]
    cfg = SimConfig((0.0,), 30.0, 1e-3, 100_000, 0, (0.0, 0.5, 1.0, 2.0, 4.0, 8.0))
    t = time.perf_counter()
    stats = simulate_policies(family, cfg, p111)
    t_sim = time.perf_counter() - t
    t = time.perf_counter()
    bias = measure_dt_bias(opt, cfg, p111, n_paths=5000)
    t_bias = time.perf_counter() - t
    return {'cfg': cfg, 'family': family, 'stats': stats, 'bias': bias,
            't_sim': t_sim, 't_bias': t_bias}


def test_criterion_01_closed_form_certification(record_criterion):
    rng = np.random.default_rng(12345)
    t = time.perf_counter()
    worst = 0.0
    for dim, sigma, alpha in ((1, 1.0, 1.0), (2, 1.0, 2.0), (3, 1.0, 3.0)):
        p = validate_params(dim, sigma, alpha)
        r = rng.uniform(0.0, 10.0, 100)
        worst = max(worst, float(np.max(np.abs(closed_form_pde_residual(r, p)))))
    elapsed = time.perf_counter() - t
    ok = worst < 1e-10 and elapsed < 1.0
    record_criterion(1, 'closed-form certification', ok,
                     f'max residual {worst:.2e} (< 1e-10), {elapsed:.3f} s (< 1 s)')
    assert ok


def test_criterion_02_bracketing_certificate(record_criterion, p111):
    t = time.perf_counter()
    sol = solve_on_ball(build_grid(6.0, 1201), p111)
    elapsed = time.perf_counter() - t
    ok = (sol.max_backstep_sub <= 1e-12 and sol.max_backstep_super <= 1e-12
          and sol.max_order_violation <= 1e-12 and sol.bracket_width <= 1e-8 and elapsed < 10)
    record_criterion(2, 'bracketing certificate', ok,
                     f'width {sol.bracket_width:.2e}, backsteps {sol.max_backstep_sub:.1e}/'
                     f'{sol.max_backstep_super:.1e}, {sol.iterations_from_sub}/'
                     f'{sol.iterations_from_super} iterations, {elapsed:.2f} s')
    assert ok


def test_criterion_03_oracle_equivalence(record_criterion, nested, p111):
    res, _ = nested
    err = res.oracle_errors[-1]
    coarse = solve_on_ball(build_grid(6.0, 1201), p111)
    fine = solve_on_ball(build_grid(6.0, 2401), p111)
    e1, e2 = oracle_error(coarse, p111, 2.0, 'z'), oracle_error(fine, p111, 2.0, 'z')
    ratio = e1 / e2
    ok = err <= 1e-3 and 3.0 <= ratio <= 5.0
    record_criterion(3, 'oracle equivalence', ok,
                     f'sup |z - z_exact| on r <= 2: {err:.2e} (<= 1e-3); '
                     f'h -> h/2 error ratio {ratio:.3f} (4 +/- 25%)')
    assert ok


def test_criterion_04_nested_balls(record_criterion, nested):
    res, _ = nested
    d = res.inner_diffs
    ok = all(b < a for a, b in zip(d, d[1:]))
    record_criterion(4, 'nested-ball differences', ok,
                     'd_j = ' + ', '.join(f'{v:.2e}' for v in d) + ' (strictly decreasing)')
    assert ok


def test_criterion_05_value_function_estimates(record_criterion, nested, p111):
    res, _ = nested
    rep = check_estimates(res.value_fields[-1], p111, tol=1e-8, convexity_tol=1e-6)
    ok = rep.ok and np.isfinite(rep.gradient_constant_C)
    record_criterion(5, 'value-function estimates', ok,
                     f'bounds {rep.lower_bound_ok}/{rep.upper_bound_ok}, convexity min '
                     f'{rep.convexity_min:.3f}, gradient constant {rep.gradient_constant_C:.1f} '
                     f'(r <= R/2: {rep.gradient_constant_inner:.3f})')
    assert ok


def test_criterion_06_radial_reduction(record_criterion):
    p = validate_params(2, 1.0, 2.0)
    t = time.perf_counter()
    sol = solve_full_grid_2d(5.0, 201, p, compare_radius=2.0)
    elapsed = time.perf_counter() - t
    ok = sol.radial_agreement <= 5e-3 and elapsed < 120
    record_criterion(6, 'radial reduction (2-D grid)', ok,
                     f'max |u_2d - u_radial| on r <= 2: {sol.radial_agreement:.2e} (<= 5e-3), '
                     f'symmetry {sol.symmetry_error:.1e}, {elapsed:.1f} s')
    assert ok


def test_criterion_07_value_identity(record_criterion, mc, p111):
    st = mc['stats'][0]
    est = estimate_cost(None, None, p111, stats=st)
    bias = mc['bias']
    budget = 3 * est.std_error + est.truncation_bound + abs(bias.kappa) * bias.dt
    gap = abs(est.mean - Z0)
    elapsed = mc['t_sim'] + mc['t_bias']
    ok = gap <= budget and budget <= 0.02 * Z0 and elapsed < 300
    record_criterion(7, 'value identity J(p*) = z(0)', ok,
                     f'J = {est.mean:.5f} +/- {est.std_error:.5f}, gap {gap:.2e} <= budget '
                     f'{budget:.2e} ({100 * budget / Z0:.2f}% <= 2%), kappa {bias.kappa:.3f}, '
                     f'{elapsed:.0f} s for 4 policies + dt-bias')
    assert ok


def test_criterion_08_zero_policy_and_ordering(record_criterion, mc, p111):
    cmp = compare_policies(mc['family'], mc['cfg'], p111, stats=mc['stats'])
    zero = next(r for r in cmp.rows if r.policy_label == 'zero')
    zero_ok = abs(zero.mean - 1.0) <= 3 * zero.std_error + zero.truncation_bound
    d0, s0 = cmp.difference('optimal', 'zero')
    dh, sh = cmp.difference('optimal', 'scaled(0.5)')
    dl, sl = cmp.difference('optimal', 'scaled(1.5)')
    ok = zero_ok and d0 + 3 * s0 < 0 and dh + 2 * sh < 0 and dl + 2 * sl < 0
    record_criterion(8, 'zero-policy cost and optimality ordering', ok,
                     f'J(zero) = {zero.mean:.4f} +/- {zero.std_error:.4f}; paired J(p*) - J(q): '
                     f'zero {d0 / s0:.0f} se, scaled(0.5) {dh / sh:.0f} se, '
                     f'scaled(1.5) {dl / sl:.0f} se')
    assert ok


def test_criterion_09_martingale(record_criterion, mc, p111):
    times = (0.0, 1.0, 2.0, 4.0, 8.0)
    opt, zero = mc['family'][0], mc['family'][1]
    mo = martingale_diagnostic(opt, mc['cfg'], p111, stats=mc['stats'][0], times=times)
    mz = martingale_diagnostic(zero, mc['cfg'], p111, value_source=closed_form_m(p111),
                               stats=mc['stats'][1], times=times)
    ok = mo.ci_contains_zero and mz.ci_negative
    record_criterion(9, 'martingale diagnostics', ok,
                     f'slope under p* {mo.slope:.1e} CI [{mo.slope_ci[0]:.1e}, '
                     f'{mo.slope_ci[1]:.1e}]; under zero {mz.slope:.1e} CI '
                     f'[{mz.slope_ci[0]:.1e}, {mz.slope_ci[1]:.1e}]')
    assert ok


def test_criterion_10_transversality(record_criterion, mc, p111):
    rep = transversality_and_moment_check(mc['family'][0], mc['cfg'], p111,
                                          stats=mc['stats'][0])
    late = rep.series[rep.times >= 2.0]
    at8 = float(rep.series[list(rep.times).index(8.0)])
    ok = bool(np.all(np.diff(late) < 0)) and at8 < 1e-3 and rep.majorizes()
    record_criterion(10, 'transversality and moment bound', ok,
                     'e^{-at} E|y|^2 at t>=2: ' + ', '.join(f'{v:.2e}' for v in late)
                     + f'; C1 = {rep.moment_fit.C1:.3f}, C2 = {rep.moment_fit.C2:.3f} '
                     f'majorizes: {rep.majorizes()}')
    assert ok


def test_criterion_11_determinism(record_criterion, tmp_path):
    cfg = tmp_path / 'run.json'
    cfg.write_text(json.dumps({'params': {'dim': 1, 'sigma': 1.0, 'alpha': 1.0},
                               'grid': {'radii': [3, 4, 5, 6], 'nodes_per_unit': 100},
                               'sim': {'n_paths': 5000, 'dt': 0.005, 'master_seed': 3}}))
    outs = []
    for rep in ('a', 'b'):
        out = tmp_path / rep
        for cmd in ('solve', 'oracle', 'simulate', 'compare'):
            assert main([cmd, '--config', str(cfg), '--out', str(out), '-q']) == 0
        outs.append(out)
    names = sorted(f.name for f in outs[0].iterdir() if f.suffix == '.csv')
    same = [(outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names]
    ok = len(names) >= 10 and all(same)
    record_criterion(11, 'determinism', ok,
                     f'{sum(same)}/{len(names)} CSV files byte-identical across two runs')
    assert ok
