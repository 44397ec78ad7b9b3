# --- Start of File: tests/conftest.py ---
import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from analysis.core import Graph  # noqa: E402
from config import Config  # noqa: E402


@pytest.fixture
def scratch_paths(tmp_path, monkeypatch):
    """ Points the ledger, results and log file at a per-test directory. """
    instance = tmp_path / 'instance'
    monkeypatch.setattr(Config, 'INSTANCE_FOLDER_PATH', str(instance))
    monkeypatch.setattr(Config, 'DATABASE_PATH', str(instance / 'runs.db'))
    monkeypatch.setattr(Config, 'RESULTS_DIR', str(tmp_path / 'results'))
    monkeypatch.setattr(Config, 'LOG_FILE_PATH', str(instance / 'potts.log'))
    return tmp_path


@pytest.fixture
def ledger(scratch_paths):
    import database as db
    db.init_db()
    return db


@pytest.fixture
def triangle():
    return Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def path3():
    return Graph.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def k4():
    return Graph.from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

# --- END OF FILE: tests/conftest.py ---
