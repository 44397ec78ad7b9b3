# --- Start of File: tests/test_experiments.py ---
import json
import logging
import os

import pytest

import cli
from analysis.core import Params
from config import ExperimentConfig
from tasks.experiment_tasks import EXPERIMENT_TASKS, _psi_checks


def _submit(ledger, cfg):
    config_json = cfg.to_json()
    run_id = ledger.add_run(cfg.experiment, config_json, cfg.config_hash(), cfg.master_seed)
    EXPERIMENT_TASKS[cfg.experiment].apply(args=(run_id, config_json))
    return ledger.get_run_by_id(run_id)


def _results_dir(scratch_paths):
    return str(scratch_paths / 'results')


def test_fixedpoint_run_is_recorded(ledger, scratch_paths):
    cfg = ExperimentConfig(experiment='fixedpoint', params={'q': 3, 'd': 3, 'beta': 0.6, 'B': 0.1},
                           out_dir=_results_dir(scratch_paths))
    run = _submit(ledger, cfg)
    assert run['status'] == 'Complete'
    assert run['passed'] == 1
    out_dir = run['output_dir']
    assert out_dir.endswith(os.path.join('fixedpoint', cfg.config_hash()[:12]))
    report = json.load(open(os.path.join(out_dir, 'report.json'), encoding='utf-8'))
    assert report['config_hash'] == cfg.config_hash()
    assert report['files'] == ['results.csv', 'report.json']
    assert report['summary']['region'] in {'UNIQUE', 'R_FREE', 'R_C', 'R_1'}
    assert len(ledger.get_checks_for_run(run['id'])) == len(report['checks'])


def test_results_are_byte_identical_across_reruns(ledger, scratch_paths):
    cfg = ExperimentConfig(experiment='fixedpoint', params={'q': 4, 'd': 3, 'beta': 1.2, 'B': 0.05},
                           out_dir=_results_dir(scratch_paths))
    first = _submit(ledger, cfg)
    path = os.path.join(first['output_dir'], 'results.csv')
    before = open(path, 'rb').read()
    second = _submit(ledger, cfg)
    assert second['output_dir'] == first['output_dir']
    assert open(path, 'rb').read() == before


def test_phase_run_writes_panels(ledger, scratch_paths):
    cfg = ExperimentConfig(experiment='phase', params={'q': 3, 'd': 4, 'beta': 1.0, 'B': 0.0},
                           extra={'panels': [[3, 4]], 'n_points': 5, 'psi_Bs': [0.01], 'delta': 0.5,
                                  'derivative_samples': 2},
                           out_dir=_results_dir(scratch_paths))
    run = _submit(ledger, cfg)
    assert run['status'] == 'Complete'
    files = os.listdir(run['output_dir'])
    assert {'phase.svg', 'results.csv', 'report.json'} <= set(files)
    header = open(os.path.join(run['output_dir'], 'results.csv'), encoding='utf-8').readline().strip()
    assert header == 'q,d,B,beta_free,beta_c,beta_plus'
    names = {c['check_name'] for c in ledger.get_checks_for_run(run['id'])}
    assert {'curve_trace', 'curve_ordering', 'beta_c_closed_form', 'region_derivatives'} <= names


def test_gen_run_writes_graph(ledger, scratch_paths):
    cfg = ExperimentConfig(experiment='gen', gen={'n': 60, 'd': 3, 'model': 'CONFIGURATION', 'seed': 3},
                           out_dir=_results_dir(scratch_paths))
    run = _submit(ledger, cfg)
    assert run['status'] == 'Complete'
    header = open(os.path.join(run['output_dir'], 'graph.txt'), encoding='utf-8').readline()
    assert header == '60 90\n'


def test_invalid_parameters_mark_the_run_as_error(ledger, scratch_paths):
    cfg = ExperimentConfig(experiment='fixedpoint', params={'q': 1, 'd': 3, 'beta': 1.0, 'B': 0.0},
                           out_dir=_results_dir(scratch_paths))
    run = _submit(ledger, cfg)
    assert run['status'] == 'Error'
    assert run['error_message'].startswith('ValueError: q must be an integer >= 2')


def test_cli_fixedpoint(scratch_paths, capsys):
    code = cli.main(['--out-dir', _results_dir(scratch_paths), '--seed', '2',
                     'fixedpoint', '--q', '3', '--d', '3', '--beta', '0.6', '--B', '0.1'])
    assert code == 0
    out = capsys.readouterr().out
    assert 'status=Complete' in out
    assert cli.main(['--list-runs', '5']) == 0


def test_cli_config_layering(tmp_path):
    path = tmp_path / 'exp.json'
    path.write_text(json.dumps({'params': {'q': 10, 'd': 4, 'beta': 0.5, 'B': 0.0}, 'master_seed': 9}))
    args = cli.build_parser().parse_args(['--config', str(path), 'fixedpoint', '--beta', '2.0'])
    cfg = cli.build_experiment_config(args)
    assert cfg.params == {'q': 10, 'd': 4, 'beta': 2.0, 'B': 0.0}
    assert cfg.master_seed == 9


def test_cli_rejects_unknown_config_keys(scratch_paths, tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text(json.dumps({'temperature': 1.0}))
    assert cli.main(['--config', str(path), 'fixedpoint']) == 2


def test_psi_checks_report_fields_beyond_the_critical_line(caplog):
    with caplog.at_level(logging.WARNING, logger='tasks.experiment_tasks'):
        checks = _psi_checks(Params(3, 4, 0.0, 0.0), [0.01, 0.02, 0.05], 0.05)
    assert 'skip B=[0.02, 0.05]' in caplog.text
    assert {c['check_name'] for c in checks} >= {'psi_identity_free', 'psi_identity_wired', 'lambda_delta_gap'}
    assert all('B=0.01' in c['instance'] for c in checks)
    assert all(c['passed'] for c in checks)


def test_cli_accepts_run_flags_after_the_subcommand():
    parser = cli.build_parser()
    cfg = cli.build_experiment_config(parser.parse_args(['--seed', '1', 'gen', '--seed', '3', '--n', '20', '--d', '3']))
    assert cfg.master_seed == 3
    assert cfg.gen['seed'] == 3
    cfg = cli.build_experiment_config(parser.parse_args(['--seed', '5', '--threads', '2', 'gen', '--n', '20']))
    assert (cfg.master_seed, cfg.threads) == (5, 2)


def test_cli_sample_reads_gen_spec_and_writes_estimators(ledger, scratch_paths, tmp_path):
    spec = tmp_path / 'spec.json'
    spec.write_text(json.dumps({'n': 40, 'd': 3, 'model': 'CONFIGURATION', 'seed': 2}))
    out = tmp_path / 'estimators.json'
    args = cli.build_parser().parse_args([
        'sample', '--gen-spec', str(spec), '--n', '30', '--q', '3', '--d', '3', '--beta', '0.5', '--B', '0.1',
        '--burnin', '5', '--samples', '10', '--chains', '1', '--out', str(out),
        '--seed', '4', '--out-dir', _results_dir(scratch_paths)])
    cfg = cli.build_experiment_config(args)
    assert cfg.gen == {'n': 30, 'd': 3, 'model': 'CONFIGURATION', 'seed': 2}
    run = _submit(ledger, cfg)
    assert run['status'] == 'Complete'
    report = json.load(open(out, encoding='utf-8'))
    assert report['gen'] == cfg.gen
    assert len(report['estimators']) == 2


@pytest.mark.slow
def test_oracle_suite_passes(ledger, scratch_paths):
    cfg = ExperimentConfig(experiment='oracle', master_seed=0, extra={'n_graphs': 50},
                           out_dir=_results_dir(scratch_paths))
    run = _submit(ledger, cfg)
    assert run['status'] == 'Complete'
    assert run['passed'] == 1

# --- END OF FILE: tests/test_experiments.py ---
