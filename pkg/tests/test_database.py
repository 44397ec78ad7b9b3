# --- Start of File: tests/test_database.py ---
import json


def test_run_lifecycle(ledger):
    run_id = ledger.add_run('phase', '{}', 'f' * 64, 7)
    assert isinstance(run_id, int)
    run = ledger.get_run_by_id(run_id)
    assert run['status'] == 'Pending'
    assert run['master_seed'] == 7

    assert ledger.update_run_status(run_id, 'Running')
    assert ledger.update_run_result(run_id, {'rows': 3, 'value': 0.5}, True, '/tmp/out')
    run = ledger.get_run_by_id(run_id)
    assert run['status'] == 'Complete'
    assert run['passed'] == 1
    assert run['output_dir'] == '/tmp/out'
    assert json.loads(run['result_json']) == {'rows': 3, 'value': 0.5}


def test_error_message_kept_only_for_errors(ledger):
    run_id = ledger.add_run('oracle', '{}', 'a' * 64, 0)
    assert ledger.update_run_status(run_id, 'Error', 'ValueError: bad q')
    assert ledger.get_run_by_id(run_id)['error_message'] == 'ValueError: bad q'
    assert ledger.update_run_status(run_id, 'Queued', 'ignored')
    assert ledger.get_run_by_id(run_id)['error_message'] is None


def test_invalid_status_and_missing_run(ledger):
    assert ledger.add_run('phase', '{}', 'b' * 64, 0, status='Done') is None
    run_id = ledger.add_run('phase', '{}', 'b' * 64, 0)
    assert ledger.update_run_status(run_id, 'Finished') is False
    assert ledger.update_run_status(9999, 'Running') is False
    assert ledger.update_run_result(9999, {}, False) is False
    assert ledger.get_run_by_id(9999) is None
    assert ledger.delete_run(9999) is False


def test_checks_cascade_on_delete(ledger):
    run_id = ledger.add_run('oracle', '{}', 'c' * 64, 0)
    rows = [{'check_name': 'sim_unif', 'instance': 'M=2,q=2', 'max_residual': 0.0, 'pass': True},
            {'check_name': 'ghost_decay', 'instance': 'd=3', 'max_residual': float('inf'), 'pass': False}]
    assert ledger.add_checks(run_id, rows) == 2
    assert ledger.add_check(run_id, 'tree_exactness', 'T_3(1)', 1e-15, True)
    checks = ledger.get_checks_for_run(run_id)
    assert [c['check_name'] for c in checks] == ['sim_unif', 'ghost_decay', 'tree_exactness']
    assert [c['passed'] for c in checks] == [1, 0, 1]
    assert ledger.delete_run(run_id)
    assert ledger.get_checks_for_run(run_id) == []


def test_recent_runs_newest_first(ledger):
    ids = [ledger.add_run('gen', '{}', str(i) * 64, i) for i in range(3)]
    recent = ledger.get_recent_runs(limit=2)
    assert [r['id'] for r in recent] == [ids[2], ids[1]]

# --- END OF FILE: tests/test_database.py ---
