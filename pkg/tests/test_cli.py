import json
import subprocess
import sys

import pytest

from invplan.cli import (EXIT_CONFIG, EXIT_OK, EXIT_ORACLE, EXIT_SOLVER, EXIT_VERIFY,
                         load_config, main)
from invplan.errors import ConfigError, NonPositiveSigma
from invplan.reporting import read_csv

ORACLE = {'dim': 1, 'sigma': 1.0, 'alpha': 1.0}
SMALL_SIM = {'n_paths': 2000, 'dt': 0.01, 'dt_bias_paths': 500}


def _config(tmp_path, name='run.json', **cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _run(cmd, cfg, out, *extra):
    return main([cmd, '--config', cfg, '--out', str(out), '-q', *extra])


def test_solve_writes_field_and_report(tmp_path):
    cfg = _config(tmp_path, params=ORACLE, grid={'radii': [3, 4, 5, 6], 'nodes_per_unit': 100})
    assert _run('solve', cfg, tmp_path / 'o') == EXIT_OK
    header, cols = read_csv(tmp_path / 'o' / 'solution.csv')
    assert header == ['r', 'u', 'z', 'dz_dr', 'd2z_dr2']
    assert cols['r'][-1] == 6.0 and cols['z'][0] == pytest.approx(0.6180340, abs=1e-4)
    rep = json.loads((tmp_path / 'o' / 'solve_report.json').read_text())
    assert all(c['bracket_width'] <= 1e-8 for c in rep['certificates'])
    assert rep['nested']['inner_diffs_decreasing']
    assert rep['estimates']['upper_bound_ok']
    assert rep['config']['solver']['tol_bracket'] == 1e-8


def test_sigma_zero_is_config_error(tmp_path, capsys):
    cfg = _config(tmp_path, params={'dim': 1, 'sigma': 0.0, 'alpha': 1.0})
    assert _run('solve', cfg, tmp_path / 'o') == EXIT_CONFIG
    assert 'NonPositiveSigma' in capsys.readouterr().err


def test_max_iters_one_is_solver_failure(tmp_path, capsys):
    cfg = _config(tmp_path, params=ORACLE, solver={'max_iters': 1})
    assert _run('solve', cfg, tmp_path / 'o') == EXIT_SOLVER
    assert 'MaxItersExceeded' in capsys.readouterr().err


def test_unknown_key_is_config_error(tmp_path, capsys):
    cfg = _config(tmp_path, params=ORACLE, solver={'tol_bracekt': 1e-8})
    assert _run('solve', cfg, tmp_path / 'o') == EXIT_CONFIG
    assert 'solver.tol_bracekt' in capsys.readouterr().err
    cfg = _config(tmp_path, params=ORACLE, extra=1)
    assert _run('solve', cfg, tmp_path / 'o') == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert _run('solve', str(tmp_path / 'nope.json'), tmp_path / 'o') == EXIT_CONFIG


def test_oracle_table(tmp_path):
    cfg = _config(tmp_path, params=ORACLE)
    assert _run('oracle', cfg, tmp_path / 'o') == EXIT_OK
    _, cols = read_csv(tmp_path / 'o' / 'oracle.csv')
    assert cols['z_positive_branch'][0] == pytest.approx(0.6180340, abs=5e-8)
    assert cols['z_negative_branch'][0] == pytest.approx(-1.6180340, abs=5e-8)
    rep = json.loads((tmp_path / 'o' / 'oracle_report.json').read_text())
    flags = {b['branch']: b['is_positive'] for b in rep['branches']}
    assert flags == {'positive-z': True, 'negative-z': False}


def test_oracle_unavailable(tmp_path):
    cfg = _config(tmp_path, params={'dim': 2, 'sigma': 1.0, 'alpha': 1.0})
    assert _run('oracle', cfg, tmp_path / 'o') == EXIT_ORACLE
    cfg = _config(tmp_path, params={'dim': 2, 'sigma': 1.0, 'alpha': 1.0},
                  policy_source={'kind': 'oracle'})
    assert _run('simulate', cfg, tmp_path / 'o') == EXIT_ORACLE


def test_simulate_missing_field_file(tmp_path):
    cfg = _config(tmp_path, params=ORACLE,
                  policy_source={'kind': 'field', 'field_csv': str(tmp_path / 'missing.csv')})
    assert _run('simulate', cfg, tmp_path / 'o') == EXIT_CONFIG


def test_simulate_outputs(tmp_path):
    cfg = _config(tmp_path, params=ORACLE, sim=SMALL_SIM)
    assert _run('simulate', cfg, tmp_path / 'o') == EXIT_OK
    out = tmp_path / 'o'
    for name in ('costs.csv', 'martingale_optimal.csv', 'transversality_optimal.csv',
                 'second_moment_zero.csv', 'martingale_scaled_0.5.csv', 'simulate_report.json'):
        assert (out / name).is_file()
    header, cols = read_csv(out / 'martingale_optimal.csv')
    assert header == ['t', 'mean', 'stderr']
    assert cols['mean'][0] == pytest.approx(-0.6180340, abs=5e-8)
    rep = json.loads((out / 'simulate_report.json').read_text())
    assert rep['policies']['optimal']['martingale']['ci_contains_zero']
    assert rep['value_source']['kind'] == 'oracle'


def test_simulate_from_field_csv(tmp_path):
    cfg = _config(tmp_path, params=ORACLE, grid={'radii': [4, 6], 'nodes_per_unit': 100})
    assert _run('solve', cfg, tmp_path / 's') == EXIT_OK
    cfg = _config(tmp_path, 'sim.json', params=ORACLE, sim={**SMALL_SIM, 'n_paths': 500},
                  policies=['optimal', 'zero'],
                  policy_source={'kind': 'field', 'field_csv': str(tmp_path / 's' / 'solution.csv')})
    assert _run('simulate', cfg, tmp_path / 'o') == EXIT_OK
    rep = json.loads((tmp_path / 'o' / 'simulate_report.json').read_text())
    assert rep['value_source']['kind'] == 'field'
    assert rep['policies']['optimal']['cost']['mean'] == pytest.approx(0.618, abs=0.05)


def test_compare_optimal_first(tmp_path):
    cfg = _config(tmp_path, params=ORACLE, sim=SMALL_SIM, policies=['zero', 'optimal'])
    assert _run('compare', cfg, tmp_path / 'o') == EXIT_OK
    text = (tmp_path / 'o' / 'comparison.csv').read_text().splitlines()
    assert text[0].startswith('rank,policy,mean')
    assert text[1].split(',')[1] == 'optimal' and text[2].split(',')[1] == 'zero'


def test_verify_small_config_passes(tmp_path):
    cfg = _config(tmp_path, params=ORACLE, sim=SMALL_SIM)
    assert _run('verify', cfg, tmp_path / 'o') == EXIT_OK
    rep = json.loads((tmp_path / 'o' / 'verify_report.json').read_text())
    assert rep['failed'] == []
    assert {i['status'] for i in rep['invariants']} == {'passed'}


def test_verify_non_oracle_case_skips_closed_form(tmp_path):
    cfg = _config(tmp_path, params={'dim': 1, 'sigma': 1.0, 'alpha': 2.0},
                  grid={'radii': [4, 6], 'nodes_per_unit': 100},
                  sim=SMALL_SIM)
    code = _run('verify', cfg, tmp_path / 'o')
    rep = json.loads((tmp_path / 'o' / 'verify_report.json').read_text())
    status = {i['name']: i['status'] for i in rep['invariants']}
    assert status['closed_form_residual'] == 'skipped' and status['oracle_match'] == 'skipped'
    assert code == (EXIT_VERIFY if rep['failed'] else EXIT_OK)


def test_verify_reports_failed_invariant(tmp_path, capsys):
    # checkpoints stop at t = 1, where the discounted second moment is still ~0.2
    cfg = _config(tmp_path, params=ORACLE, sim={**SMALL_SIM, 'checkpoint_times': [0, 0.5, 1]},
                  policies=['optimal', 'zero'])
    assert _run('verify', cfg, tmp_path / 'o') == EXIT_VERIFY
    rep = json.loads((tmp_path / 'o' / 'verify_report.json').read_text())
    assert 'transversality_small' in rep['failed']
    assert 'transversality_small' in capsys.readouterr().err


@pytest.mark.slow
def test_verify_defaults(tmp_path):
    cfg = _config(tmp_path, params=ORACLE)
    assert _run('verify', cfg, tmp_path / 'o') == EXIT_OK


def test_seed_override_and_echo(tmp_path):
    cfg = _config(tmp_path, params=ORACLE, sim=SMALL_SIM, policies=['optimal', 'zero'])
    assert _run('simulate', cfg, tmp_path / 'a', '--seed', '5') == EXIT_OK
    assert _run('simulate', cfg, tmp_path / 'b', '--seed', '6') == EXIT_OK
    a = (tmp_path / 'a' / 'costs.csv').read_bytes()
    assert a != (tmp_path / 'b' / 'costs.csv').read_bytes()
    echoed = json.loads((tmp_path / 'a' / 'simulate_report.json').read_text())['config']
    assert echoed['sim']['master_seed'] == 5 and echoed['sim']['horizon'] > 0
    # rerunning from the echoed configuration reproduces the outputs
    cfg2 = _config(tmp_path, 'echo.json', **echoed)
    assert _run('simulate', cfg2, tmp_path / 'c') == EXIT_OK
    for f in (tmp_path / 'a').iterdir():
        if f.suffix == '.csv':
            assert f.read_bytes() == (tmp_path / 'c' / f.name).read_bytes()


def test_load_config_resolves_defaults():
    rc = load_config({'params': {'dim': 2, 'sigma': 1.0, 'alpha': 1.0}})
    eff = rc.effective
    assert eff['sim']['y0'] == [0.0, 0.0]
    assert eff['policy_source']['kind'] == 'solve'
    assert eff['grid']['compare_radius'] == 2.0
    assert rc.sim.horizon == eff['sim']['horizon']
    with pytest.raises(NonPositiveSigma):
        load_config({'params': {'dim': 1, 'sigma': -1.0, 'alpha': 1.0}})
    with pytest.raises(ConfigError):
        load_config({'params': ORACLE, 'policies': ['best']})
    with pytest.raises(ConfigError):
        load_config({'params': ORACLE, 'sim': {'y0': [0.0, 1.0]}})
    with pytest.raises(ConfigError):
        load_config({'params': {'dim': 1}})


def test_console_entry_point(tmp_path):
    cfg = _config(tmp_path, params=ORACLE)
    proc = subprocess.run([sys.executable, '-m', 'invplan', 'oracle', '--config', cfg,
                           '--out', str(tmp_path / 'o')], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout == ''
    bad = _config(tmp_path, 'bad.json', params={'dim': 2, 'sigma': 1.0, 'alpha': 1.0})
    proc = subprocess.run([sys.executable, '-m', 'invplan', 'oracle', '--config', bad,
                           '--out', str(tmp_path / 'o')], capture_output=True, text=True)
    assert proc.returncode == 4 and 'OracleUnavailable' in proc.stderr
