# --- Start of File: utils/io_utils.py ---
import csv
import json
import logging
import math
import os

import numpy as np

from analysis.core import Graph, NeighborhoodLaw
from config import Config

logger = logging.getLogger(__name__)

_BASE36 = '0123456789abcdefghijklmnopqrstuvwxyz'


# =============================================================================
# === Result Files ===
# =============================================================================

def run_output_dir(out_dir, experiment, config_hash):
    """ <out_dir>/<experiment>/<first 12 hex digits of the hash>, created if missing. """
    path = os.path.join(out_dir or Config.RESULTS_DIR, experiment, config_hash[:12])
    os.makedirs(path, exist_ok=True)
    return path


def format_value(value, digits=None):
    """ Fixed formatting for CSV cells; floats get `digits` significant digits. """
    digits = Config.CSV_SIGNIFICANT_DIGITS if digits is None else digits
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return f"{value:.{digits}g}"
    if value is None:
        return ''
    return str(value)


def write_csv(path, rows, columns=None):
    """
    Writes dict rows with a fixed column order (the first row's keys unless
    `columns` is given). Returns the path.
    """
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(c)) for c in columns])
    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, 'to_dict'):
        return obj.to_dict()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def to_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default)


def write_json(path, obj):
    with open(path, 'w', encoding='utf-8') as fh:
        fh.write(to_json(obj))
        fh.write('\n')
    logger.info(f"Wrote JSON report to {path}")
    return path


# =============================================================================
# === Graph Text Format ===
# =============================================================================

def write_graph(path, G):
    """ First line "n m", then one "u v" line per edge (0-based). """
    with open(path, 'w', encoding='utf-8') as fh:
        fh.write(f"{G.n} {G.n_edges}\n")
        for u, v in G.edge_list():
            fh.write(f"{u} {v}\n")
    logger.info(f"Wrote graph n={G.n}, m={G.n_edges} to {path}")
    return path


def read_graph(path):
    with open(path, 'r', encoding='utf-8') as fh:
        lines = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith('#')]
    if not lines or len(lines[0]) != 2:
        raise ValueError(f"{path}: expected a header line 'n m'")
    n, m = int(lines[0][0]), int(lines[0][1])
    edges = [(int(a), int(b)) for a, b in lines[1:]]
    if len(edges) != m:
        raise ValueError(f"{path}: header announces {m} edges, found {len(edges)}")
    return Graph.from_edges(n, edges)


# =============================================================================
# === Neighborhood Laws ===
# =============================================================================

def write_law_csv(path, law):
    rows = [{'pattern_index': i, 'probability': float(p)} for i, p in enumerate(law.probs)]
    return write_csv(path, rows, ['pattern_index', 'probability'])


def read_law_csv(path, d, t, q):
    with open(path, 'r', newline='', encoding='utf-8') as fh:
        reader = csv.DictReader(fh)
        pairs = sorted((int(r['pattern_index']), float(r['probability'])) for r in reader)
    probs = np.array([p for _, p in pairs])
    if [i for i, _ in pairs] != list(range(probs.size)):
        raise ValueError(f"{path}: pattern indices are not 0..{probs.size - 1}")
    return NeighborhoodLaw(d, t, q, probs)


# =============================================================================
# === Snapshot Dumps ===
# =============================================================================

def pack_colors(colors):
    """ One base-36 digit per vertex. """
    colors = np.asarray(colors, dtype=np.int64)
    if colors.size and (colors.min() < 0 or colors.max() >= len(_BASE36)):
        raise ValueError("Snapshot packing supports at most 36 colors")
    return ''.join(_BASE36[c] for c in colors)


def unpack_colors(line):
    return np.array([_BASE36.index(ch) for ch in line.strip()], dtype=np.int8)


def write_snapshots(path, snapshots):
    """ One line per snapshot with the base spins packed in base 36. """
    count = 0
    with open(path, 'w', encoding='utf-8') as fh:
        for s in snapshots:
            fh.write(pack_colors(s.spins.base_colors()))
            fh.write('\n')
            count += 1
    logger.info(f"Wrote {count} snapshots to {path}")
    return path

# --- END OF FILE: utils/io_utils.py ---
