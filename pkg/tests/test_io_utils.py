# --- Start of File: tests/test_io_utils.py ---
import json
import os

import numpy as np
import pytest

from analysis.core import NeighborhoodLaw, Params
from analysis.sampler import run_chain
from utils import error_utils, io_utils


@pytest.mark.parametrize('value,expected', [
    (0.1, '0.10000000000000001'),
    (1.5, '1.5'),
    (np.float64(2.0), '2'),
    (True, 'true'),
    (np.bool_(False), 'false'),
    (np.int64(3), '3'),
    (float('nan'), 'nan'),
    (float('-inf'), '-inf'),
    (None, ''),
    ('R_1', 'R_1'),
])
def test_format_value(value, expected):
    assert io_utils.format_value(value) == expected


def test_write_csv_is_stable(tmp_path):
    rows = [{'b': 1.0 / 3.0, 'a': 1}, {'a': 2, 'b': float('inf')}]
    path = io_utils.write_csv(str(tmp_path / 'x.csv'), rows)
    text = open(path, encoding='utf-8').read()
    assert text == 'b,a\n0.33333333333333331,1\ninf,2\n'
    io_utils.write_csv(str(tmp_path / 'y.csv'), rows)
    assert open(tmp_path / 'y.csv', encoding='utf-8').read() == text
    io_utils.write_csv(str(tmp_path / 'z.csv'), rows, ['a'])
    assert open(tmp_path / 'z.csv', encoding='utf-8').read() == 'a\n1\n2\n'


def test_json_handles_numpy(tmp_path):
    payload = {'x': np.arange(3), 'y': np.float64(0.5), 'z': np.bool_(True), 'p': Params(3, 3, 1.0, 0.0)}
    path = io_utils.write_json(str(tmp_path / 'r.json'), payload)
    loaded = json.load(open(path, encoding='utf-8'))
    assert loaded == {'x': [0, 1, 2], 'y': 0.5, 'z': True, 'p': {'q': 3, 'd': 3, 'beta': 1.0, 'B': 0.0}}
    with pytest.raises(TypeError):
        io_utils.to_json({'bad': object()})


def test_run_output_dir(tmp_path):
    path = io_utils.run_output_dir(str(tmp_path), 'phase', 'abcdef0123456789')
    assert path == os.path.join(str(tmp_path), 'phase', 'abcdef012345')
    assert os.path.isdir(path)


def test_graph_file_round_trip(tmp_path, k4):
    path = io_utils.write_graph(str(tmp_path / 'g.txt'), k4)
    assert open(path, encoding='utf-8').readline() == '4 6\n'
    back = io_utils.read_graph(path)
    np.testing.assert_array_equal(back.edges, k4.edges)


def test_graph_file_errors(tmp_path):
    bad = tmp_path / 'bad.txt'
    bad.write_text('3 2\n0 1\n')
    with pytest.raises(ValueError):
        io_utils.read_graph(str(bad))
    bad.write_text('')
    with pytest.raises(ValueError):
        io_utils.read_graph(str(bad))


def test_law_csv(tmp_path):
    probs = np.zeros(16)
    probs[[0, 15]] = 0.5
    law = NeighborhoodLaw(3, 1, 2, probs)
    path = io_utils.write_law_csv(str(tmp_path / 'law.csv'), law)
    assert law.tv_distance(io_utils.read_law_csv(path, 3, 1, 2)) == 0.0


def test_snapshot_packing(tmp_path, k4):
    assert io_utils.pack_colors([0, 9, 10, 35]) == '09az'
    assert io_utils.unpack_colors('09az\n').tolist() == [0, 9, 10, 35]
    with pytest.raises(ValueError):
        io_utils.pack_colors([36])
    snaps = list(run_chain(k4, Params(3, 3, 1.0, 0.0), burn_in=1, n_samples=3, thin=1, seed=0))
    path = io_utils.write_snapshots(str(tmp_path / 's.txt'), snaps)
    lines = open(path, encoding='utf-8').read().splitlines()
    assert len(lines) == 3
    np.testing.assert_array_equal(io_utils.unpack_colors(lines[2]), snaps[2].spins.base_colors())


def test_format_error_truncates():
    try:
        raise ValueError('x' * 5000)
    except ValueError as e:
        text = error_utils.format_error(e, max_length=300)
    assert text.startswith('ValueError: ')
    assert len(text) <= 300
    assert '[TRUNCATED]' in text
    row = error_utils.error_row('tree_checks', 'section', RuntimeError('boom'))
    assert row['pass'] is False
    assert row['max_residual'] == float('inf')
    assert row['error'] == 'RuntimeError: boom'

# --- END OF FILE: tests/test_io_utils.py ---
