"""Command-line runs driven by a JSON configuration file.

    invplan {solve,oracle,simulate,compare,verify} --config run.json [--out DIR] [--seed N]

Exit codes:
    0  success
    2  configuration error (unknown key, bad value, missing file, invalid parameters)
    3  solver certificate failure (MaxItersExceeded, BracketTooWide, ...)
    4  closed form requested but unavailable (alpha != dim * sigma^2)
    5  a verification invariant failed (the report names it)

Data goes to files in the output directory; log messages go to stderr.
"""
import argparse
import copy
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (ConfigError, InvplanError, NonPositiveNode, OracleUnavailable,
                     ParameterError, SolverCertificateError, StateOutsideGrid)
from .mc_sim import (CI_MULT, SimConfig, compare_policies, default_horizon, measure_dt_bias,
                     martingale_diagnostic, simulate_policies, transversality_and_moment_check,
                     _cost_estimate)
from .model import (NEGATIVE_Z, POSITIVE_Z, ClosedFormSolution, closed_form_dz_dr, closed_form_m,
                    closed_form_pde_residual, closed_form_z, validate_params)
from .pde_solver import (MONOTONE_SLACK, RadialGrid, check_estimates, nested_solve)
from .policy import Policy, hamiltonian_reduction_check, value_at
from .reporting import read_field_csv, write_csv, write_field_csv, write_json, write_series_csv

__all__ = ['main', 'load_config', 'RunConfig', 'DEFAULTS', 'EXIT_OK', 'EXIT_CONFIG',
           'EXIT_SOLVER', 'EXIT_ORACLE', 'EXIT_VERIFY']

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_ORACLE = 4
EXIT_VERIFY = 5

log = logging.getLogger('invplan')

DEFAULTS = {
    'params': {'dim': None, 'sigma': None, 'alpha': None},
    'grid': {'radii': [3.0, 4.0, 5.0, 6.0], 'nodes_per_unit': 200, 'compare_radius': None},
    'solver': {'tol_iter': 1e-12, 'tol_bracket': 1e-8, 'max_iters': 10000, 'workers': 1},
    'sim': {'y0': None, 'horizon': None, 'dt': 1e-3, 'n_paths': 20000, 'master_seed': 0,
            'checkpoint_times': None, 'dt_bias_paths': 2000},
    'policies': ['optimal', 'zero', {'scaled': 0.5}, {'scaled': 1.5}],
    'policy_source': {'kind': 'auto', 'field_csv': None},
    'output_dir': 'invplan_out',
}
DEFAULT_CHECKPOINTS = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0]
SOURCE_KINDS = ('auto', 'oracle', 'field', 'solve')


@dataclass
class RunConfig:
    effective: dict        # every default resolved; JSON-serialisable
    params: object
    sim: SimConfig

    @property
    def out_dir(self):
        return Path(self.effective['output_dir'])

    def section(self, name):
        return self.effective[name]


def _merge(defaults, given, where=''):
    if not isinstance(given, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if k not in defaults:
            raise ConfigError(f"unknown key '{where}{k}'")
        if isinstance(defaults[k], dict):
            out[k] = _merge(defaults[k], v, f'{where}{k}.')
        else:
            out[k] = v
    return out


def _number(v, name, kind=float):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name} must be a number, got {v!r}")
    if kind is int:
        if int(v) != v:
            raise ConfigError(f"{name} must be an integer, got {v!r}")
        return int(v)
    return float(v)


def _policy_spec(spec):
    if spec in ('optimal', 'zero'):
        return spec
    if isinstance(spec, dict) and list(spec) == ['scaled']:
        return {'scaled': _number(spec['scaled'], 'policies.scaled')}
    raise ConfigError(f"policy must be 'optimal', 'zero' or {{\"scaled\": factor}}, got {spec!r}")


def load_config(source, out=None, seed=None):
    """Parse a config (path or dict), apply overrides and resolve every default."""
    if isinstance(source, (str, Path)):
        try:
            raw = json.loads(Path(source).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {source}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
    else:
        raw = source
    cfg = _merge(DEFAULTS, raw)
    p = cfg['params']
    if any(p[k] is None for k in ('dim', 'sigma', 'alpha')):
        raise ConfigError("params.dim, params.sigma and params.alpha are required")
    params = validate_params(p['dim'], p['sigma'], p['alpha'])
    cfg['params'] = params.to_dict()

    g = cfg['grid']
    if not isinstance(g['radii'], list) or len(g['radii']) < 2:
        raise ConfigError("grid.radii must be a list of at least two radii")
    g['radii'] = [_number(r, 'grid.radii') for r in g['radii']]
    g['nodes_per_unit'] = _number(g['nodes_per_unit'], 'grid.nodes_per_unit', int)
    if g['compare_radius'] is None:
        g['compare_radius'] = min(2.0, g['radii'][0])
    g['compare_radius'] = _number(g['compare_radius'], 'grid.compare_radius')

    s = cfg['solver']
    s['tol_iter'] = _number(s['tol_iter'], 'solver.tol_iter')
    s['tol_bracket'] = _number(s['tol_bracket'], 'solver.tol_bracket')
    s['max_iters'] = _number(s['max_iters'], 'solver.max_iters', int)
    s['workers'] = _number(s['workers'], 'solver.workers', int)

    m = cfg['sim']
    if seed is not None:
        m['master_seed'] = seed
    m['master_seed'] = _number(m['master_seed'], 'sim.master_seed', int)
    m['dt'] = _number(m['dt'], 'sim.dt')
    m['n_paths'] = _number(m['n_paths'], 'sim.n_paths', int)
    m['dt_bias_paths'] = _number(m['dt_bias_paths'], 'sim.dt_bias_paths', int)
    if m['y0'] is None:
        m['y0'] = [0.0] * params.dim
    m['y0'] = [_number(v, 'sim.y0') for v in m['y0']]
    if len(m['y0']) != params.dim:
        raise ConfigError(f"sim.y0 has {len(m['y0'])} entries, params.dim is {params.dim}")
    if not m['dt'] > 0:
        raise ConfigError("sim.dt must be > 0")
    if m['horizon'] is None:
        steps = math.ceil(default_horizon(params, m["y0"], tail=1e-5) / m["dt"] - 1e-9)
        m['horizon'] = round(steps * m['dt'], 12)
    m['horizon'] = _number(m['horizon'], 'sim.horizon')
    if m['checkpoint_times'] is None:
        m['checkpoint_times'] = [t for t in DEFAULT_CHECKPOINTS if t <= m['horizon']]
    m['checkpoint_times'] = [_number(t, 'sim.checkpoint_times') for t in m['checkpoint_times']]
    try:
        sim = SimConfig(tuple(m['y0']), m['horizon'], m['dt'], m['n_paths'], m['master_seed'],
                        tuple(m['checkpoint_times']))
    except ValueError as e:
        raise ConfigError(f"sim: {e}") from None

    if not isinstance(cfg['policies'], list) or not cfg['policies']:
        raise ConfigError("policies must be a non-empty list")
    cfg['policies'] = [_policy_spec(q) for q in cfg['policies']]

    ps = cfg['policy_source']
    if ps['kind'] not in SOURCE_KINDS:
        raise ConfigError(f"policy_source.kind must be one of {SOURCE_KINDS}, got {ps['kind']!r}")
    if ps['kind'] == 'auto':
        ps['kind'] = 'oracle' if params.oracle_available else 'solve'
    if ps['kind'] == 'field' and not ps['field_csv']:
        raise ConfigError("policy_source.kind 'field' needs policy_source.field_csv")

    if out is not None:
        cfg['output_dir'] = str(out)
    cfg['output_dir'] = str(cfg['output_dir'])
    return RunConfig(cfg, params, sim)


def _slug(label):
    return label.replace('(', '_').replace(')', '').replace('#', '_')


def _nested(rc):
    g, s = rc.section('grid'), rc.section('solver')
    return nested_solve(g['radii'], g['nodes_per_unit'], rc.params, s['tol_iter'],
                        s['tol_bracket'], s['max_iters'], g['compare_radius'], s['workers'])


def _nested_summary(res):
    d = res.inner_diffs
    return {'radii': res.radii, 'h': res.h, 'inner_diffs': d,
            'inner_diffs_decreasing': bool(all(b < a for a, b in zip(d, d[1:]))),
            'compare_radius': res.compare_radius, 'oracle_errors_z': res.oracle_errors,
            'oracle_errors_u': res.oracle_errors_u}


def _value_source(rc):
    """Value function behind the policies, plus a short description."""
    ps = rc.section('policy_source')
    if ps['kind'] == 'oracle':
        if not rc.params.oracle_available:
            raise OracleUnavailable(f"no closed form for {rc.params.to_dict()}")
        return closed_form_m(rc.params), {'kind': 'oracle'}
    if ps['kind'] == 'field':
        path = Path(ps['field_csv'])
        if not path.is_file():
            raise ConfigError(f"field file not found: {path}")
        return read_field_csv(path), {'kind': 'field', 'field_csv': str(path)}
    res = _nested(rc)
    return res.value_fields[-1], {'kind': 'solve', 'certificate': res.final.certificate()}


def _build_policies(rc, source):
    base = (Policy.closed_form(source) if isinstance(source, ClosedFormSolution)
            else Policy.from_field(source))
    out = []
    for spec in rc.section('policies'):
        if spec == 'optimal':
            out.append(base)
        elif spec == 'zero':
            out.append(Policy.zero())
        else:
            out.append(base.scaled(spec['scaled']))
    return out


def _report(rc, command, **body):
    return {'command': command, 'config': rc.effective, **body}


def cmd_solve(rc):
    res = _nested(rc)
    vf = res.value_fields[-1]
    est = check_estimates(vf, rc.params)
    write_field_csv(rc.out_dir / 'solution.csv', vf)
    write_json(rc.out_dir / 'solve_report.json', _report(
        rc, 'solve', certificates=[s.certificate() for s in res.solutions],
        nested=_nested_summary(res), estimates=est.to_dict()))
    log.info("solve: bracket width %.3e on R=%g", res.final.bracket_width, res.radii[-1])
    return EXIT_OK


def cmd_oracle(rc):
    params = rc.params
    if not params.oracle_available:
        raise OracleUnavailable(f"closed form needs alpha = dim*sigma^2; got {params.to_dict()}")
    g = rc.section('grid')
    R = g['radii'][-1]
    grid = RadialGrid(R, int(round(R * g['nodes_per_unit'])) + 1)
    r = grid.r
    cols, branches = [r], []
    for b in (POSITIVE_Z, NEGATIVE_Z):
        sol = closed_form_m(params, b)
        z = closed_form_z(r, sol)
        cols += [z, closed_form_dz_dr(r, sol)]
        branches.append({'branch': b, 'm': sol.m, 'z_at_0': float(z[0]),
                         'quadratic_residual': sol.quadratic_residual(),
                         'is_positive': bool(np.all(z > 0))})
    write_csv(rc.out_dir / 'oracle.csv', ['r', 'z_positive_branch', 'dz_dr_positive_branch',
                                          'z_negative_branch', 'dz_dr_negative_branch'], cols)
    write_json(rc.out_dir / 'oracle_report.json', _report(rc, 'oracle', branches=branches))
    return EXIT_OK


def _martingale(pol, rc, source, st):
    try:
        return martingale_diagnostic(pol, rc.sim, rc.params, value_source=source, stats=st)
    except StateOutsideGrid as e:
        log.warning("martingale for %s skipped: %s", pol.label, e)
        return None


def _simulate(rc, source, policies, write=True):
    """Joint simulation plus per-policy diagnostics; optionally writes CSVs."""
    stats = simulate_policies(policies, rc.sim, rc.params)
    alpha = rc.params.alpha
    rows, diag = [], {}
    for pol, st in zip(policies, stats):
        est = _cost_estimate(st, rc.params)
        mg = _martingale(pol, rc, source, st)
        tv = transversality_and_moment_check(pol, rc.sim, rc.params, stats=st)
        rows.append(est)
        diag[pol.label] = (est, mg, tv)
        if write:
            slug = _slug(pol.label)
            if mg is not None:
                write_series_csv(rc.out_dir / f'martingale_{slug}.csv', mg.times, mg.mean,
                                 mg.std_error)
            w = np.exp(-alpha * tv.times)
            write_series_csv(rc.out_dir / f'transversality_{slug}.csv', tv.times, tv.series,
                             w * tv.second_moment_se)
            write_series_csv(rc.out_dir / f'second_moment_{slug}.csv', tv.times,
                             tv.second_moment, tv.second_moment_se)
    return stats, diag


def _diag_summary(est, mg, tv):
    out = {'cost': est.to_dict(),
           'transversality': {'times': tv.times, 'series': tv.series,
                              'moment_fit': dict(tv.moment_fit.__dict__),
                              'majorizes': tv.majorizes()}}
    if mg is None:
        out['martingale'] = {'skipped': 'states outside the value grid'}
    else:
        out['martingale'] = {'slope': mg.slope, 'slope_se': mg.slope_se, 'ci_mult': mg.ci_mult,
                             'slope_ci': list(mg.slope_ci),
                             'ci_contains_zero': mg.ci_contains_zero,
                             'ci_negative': mg.ci_negative}
    return out


def cmd_simulate(rc):
    source, info = _value_source(rc)
    policies = _build_policies(rc, source)
    _, diag = _simulate(rc, source, policies)
    write_csv(rc.out_dir / 'costs.csv',
              ['policy', 'mean', 'stderr', 'truncation_bound', 'exit_count'],
              [np.array([e.policy_label for e, _, _ in diag.values()]),
               np.array([e.mean for e, _, _ in diag.values()]),
               np.array([e.std_error for e, _, _ in diag.values()]),
               np.array([e.truncation_bound for e, _, _ in diag.values()]),
               np.array([e.exit_count for e, _, _ in diag.values()])])
    write_json(rc.out_dir / 'simulate_report.json', _report(
        rc, 'simulate', value_source=info,
        policies={k: _diag_summary(*v) for k, v in diag.items()}))
    return EXIT_OK


def _comparison_table(cmp):
    best = cmp.rows[0].policy_label
    diffs = [cmp.difference(e.policy_label, best) for e in cmp.rows]
    return best, diffs


def cmd_compare(rc):
    source, info = _value_source(rc)
    policies = _build_policies(rc, source)
    if len(policies) < 2:
        raise ConfigError("compare needs at least two policies")
    cmp = compare_policies(policies, rc.sim, rc.params)
    best, diffs = _comparison_table(cmp)
    write_csv(rc.out_dir / 'comparison.csv',
              ['rank', 'policy', 'mean', 'stderr', 'truncation_bound', 'diff_vs_best',
               'diff_vs_best_stderr'],
              [np.arange(1, len(cmp.rows) + 1), np.array([e.policy_label for e in cmp.rows]),
               np.array([e.mean for e in cmp.rows]), np.array([e.std_error for e in cmp.rows]),
               np.array([e.truncation_bound for e in cmp.rows]),
               np.array([d[0] for d in diffs]), np.array([d[1] for d in diffs])])
    write_json(rc.out_dir / 'compare_report.json', _report(
        rc, 'compare', value_source=info, ranking=[e.to_dict() for e in cmp.rows],
        paired={'labels': cmp.labels, 'diff_mean': cmp.diff_mean, 'diff_se': cmp.diff_se}))
    return EXIT_OK


class _Checks:
    def __init__(self):
        self.items = []

    def add(self, name, passed, **details):
        status = 'skipped' if passed is None else ('passed' if passed else 'failed')
        self.items.append({'name': name, 'status': status, 'details': details})

    @property
    def failed(self):
        return [c['name'] for c in self.items if c['status'] == 'failed']


def cmd_verify(rc):
    """End-to-end invariant suite; exit 5 if any invariant fails."""
    params, sim = rc.params, rc.sim
    if 'optimal' not in rc.section('policies'):
        raise ConfigError("verify needs 'optimal' among the policies")
    ck = _Checks()
    rng = np.random.default_rng(sim.master_seed)

    if params.oracle_available:
        r = rng.uniform(0.0, 10.0, 100)
        res_max = float(np.max(np.abs(closed_form_pde_residual(r, params))))
        ck.add('closed_form_residual', res_max < 1e-10, max_residual=res_max)
    else:
        ck.add('closed_form_residual', None, reason='alpha != dim * sigma^2')

    res = _nested(rc)
    tol_b = rc.section('solver')['tol_bracket']
    certs = [s.certificate() for s in res.solutions]
    ck.add('bracketing_certificate',
           all(c['bracket_width'] <= tol_b and c['max_backstep_sub'] <= MONOTONE_SLACK
               and c['max_backstep_super'] <= MONOTONE_SLACK for c in certs),
           certificates=certs)
    if params.oracle_available:
        err = res.oracle_errors[-1]
        ck.add('oracle_match', err <= 1e-3, sup_error_z=err, compare_radius=res.compare_radius)
    else:
        ck.add('oracle_match', None, reason='alpha != dim * sigma^2')
    summary = _nested_summary(res)
    ck.add('nested_differences_decreasing', summary['inner_diffs_decreasing'],
           inner_diffs=res.inner_diffs)
    est = check_estimates(res.value_fields[-1], params)
    ck.add('value_function_estimates', est.ok and math.isfinite(est.gradient_constant_C),
           **est.to_dict())
    gs = rng.standard_normal((5, params.dim)) * 3.0
    worst = min(hamiltonian_reduction_check(g, seed=sim.master_seed).worst_undercut for g in gs)
    ck.add('hamiltonian_reduction', worst >= -1e-12, worst_undercut=worst)

    if rc.section('policy_source')['kind'] == 'solve':
        source, info = res.value_fields[-1], {'kind': 'solve', 'certificate': certs[-1]}
    else:
        source, info = _value_source(rc)
    policies = _build_policies(rc, source)
    specs = rc.section('policies')
    i_opt = specs.index('optimal')
    opt = policies[i_opt]
    stats, diag = _simulate(rc, source, policies, write=False)
    est_opt, mg_opt, tv_opt = diag[opt.label]

    y0 = np.asarray(sim.y0)
    target = float(value_at(source, np.linalg.norm(y0)))
    bias = measure_dt_bias(opt, sim, params, n_paths=rc.section('sim')['dt_bias_paths'])
    budget = CI_MULT * est_opt.std_error + est_opt.truncation_bound + abs(bias.bias)
    gap = abs(est_opt.mean - target)
    ck.add('value_identity', gap <= budget, cost=est_opt.mean, value=target, gap=gap,
           budget=budget, budget_relative=budget / abs(target) if target else None,
           dt_bias=bias.bias)

    labels = [p.label for p in policies]
    if 'zero' in specs:
        ez = diag['zero'][0]
        exact = float(y0 @ y0) / params.alpha + params.dim * params.s2 / params.alpha ** 2
        tol = CI_MULT * ez.std_error + ez.truncation_bound
        ck.add('zero_policy_cost', abs(ez.mean - exact) <= tol, cost=ez.mean, exact=exact,
               tolerance=tol)
    P = len(policies)
    for j in range(P):
        if j == i_opt or labels[j] == opt.label:
            continue
        d = stats[i_opt].cost - stats[j].cost
        dm, se = float(d.mean()), float(np.std(d, ddof=1) / math.sqrt(d.size))
        k = 3.0 if labels[j] == 'zero' else 2.0
        ck.add(f'optimal_beats_{_slug(labels[j])}', dm + k * se < 0.0, diff=dm, diff_se=se,
               sigmas=k)

    if mg_opt is None:
        ck.add('martingale_optimal', False, reason='states outside the value grid')
    else:
        ck.add('martingale_optimal', mg_opt.ci_contains_zero, slope=mg_opt.slope,
               slope_ci=list(mg_opt.slope_ci))
    if 'zero' in specs:
        mg0 = diag['zero'][1]
        if mg0 is None:
            ck.add('martingale_zero', None, reason='states outside the value grid')
        else:
            ck.add('martingale_zero', mg0.ci_negative, slope=mg0.slope,
                   slope_ci=list(mg0.slope_ci))

    late = tv_opt.times >= 2.0
    ser = tv_opt.series[late]
    decreasing = bool(np.all(np.diff(ser) < 0)) if ser.size >= 2 else None
    ck.add('transversality_decreasing', decreasing, times=tv_opt.times[late], series=ser)
    ck.add('transversality_small', bool(tv_opt.series[-1] < 1e-3), t=tv_opt.times[-1],
           value=tv_opt.series[-1])
    ck.add('moment_bound_majorizes', tv_opt.majorizes(), **tv_opt.moment_fit.__dict__)

    write_json(rc.out_dir / 'verify_report.json', _report(
        rc, 'verify', value_source=info, invariants=ck.items,
        failed=ck.failed))
    for c in ck.items:
        log.info("%-34s %s", c['name'], c['status'])
    if ck.failed:
        log.error("failed invariants: %s", ', '.join(ck.failed))
        return EXIT_VERIFY
    return EXIT_OK


COMMANDS = {'solve': cmd_solve, 'oracle': cmd_oracle, 'simulate': cmd_simulate,
            'compare': cmd_compare, 'verify': cmd_verify}


def _parser():
    p = argparse.ArgumentParser(prog='invplan', description=__doc__.split('\n')[0])
    p.add_argument('command', choices=sorted(COMMANDS))
    p.add_argument('--config', required=True, help='JSON run configuration')
    p.add_argument('--out', help='output directory (overrides output_dir)')
    p.add_argument('--seed', type=int, help='master seed (overrides sim.master_seed)')
    p.add_argument('-q', '--quiet', action='store_true', help='only log warnings and errors')
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING if args.quiet else logging.INFO,
                        format='%(levelname)s %(name)s: %(message)s', force=True)
    logging.captureWarnings(True)
    try:
        rc = load_config(args.config, out=args.out, seed=args.seed)
        rc.out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](rc)
    except (ConfigError, ParameterError) as e:
        code, err = EXIT_CONFIG, e
    except (SolverCertificateError, NonPositiveNode) as e:
        code, err = EXIT_SOLVER, e
    except OracleUnavailable as e:
        code, err = EXIT_ORACLE, e
    except InvplanError as e:
        code, err = EXIT_CONFIG, e
    log.error("%s: %s", type(err).__name__, err)
    return code


if __name__ == '__main__':
    sys.exit(main())
