# --- Start of File: analysis/oracle.py ---
"""
Brute-force ground truth on instances small enough to enumerate.

Everything here sums over complete configuration spaces (spins, bonds or
both) and is therefore exact up to floating point. Partition functions are
always reported in the Potts normalization

    Z_G(beta, B) = sum_sigma exp{beta sum_E delta + B sum_V delta(sigma_v, 1)},

so the Potts, random-cluster and Edwards-Sokal enumerations of one graph
must agree on Z.

Bond configurations of a GhostGraph follow its edge order (base edges first,
then the ghost edge of every vertex). Spin configurations of a GhostGraph
carry the ghost as the last column, always color 0 (external color 1).
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import multinomial

from analysis import bethe, sampler, treeexact
from analysis.core import (DisjointSet, Graph, GhostGraph, NeighborhoodLaw, Params, PottsError, TreeIndex, check_cap,
                           component_labels, tree_index)
from analysis.graphgen import remove_vertex, rewire
from config import Config
from utils.error_utils import error_row

logger = logging.getLogger(__name__)

GHOST = -1
_CHUNK = 1 << 16
_DEFAULT_TOL = 1e-9


# =============================================================================
# === Distributions ===
# =============================================================================

@dataclass(frozen=True, eq=False)
class ExactDistribution:
    """
    A fully enumerated law.

    Attributes:
        configs (np.ndarray): One configuration per row (spins or bond bits).
        probs (np.ndarray): Probability of each row.
        log_Z (float): log of the Potts-normalized partition function.
    """
    configs: np.ndarray
    probs: np.ndarray
    log_Z: float

    def __post_init__(self):
        total = float(np.sum(self.probs))
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"Probabilities sum to {total!r}, not 1.")
        if not math.isfinite(self.log_Z):
            raise ValueError(f"Partition function must be positive and finite, got log Z = {self.log_Z}")

    @property
    def Z(self):
        return math.exp(self.log_Z)

    def expectation(self, values):
        return float(np.dot(self.probs, values))

    def law(self):
        """ Mapping config tuple -> probability. """
        return {tuple(int(x) for x in row): float(p) for row, p in zip(self.configs, self.probs)}


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """ Edwards-Sokal law as a (spin config x bond config) probability matrix. """
    spins: np.ndarray
    bonds: np.ndarray
    probs: np.ndarray
    log_Z: float

    def spin_marginal(self):
        return ExactDistribution(self.spins, self.probs.sum(axis=1), self.log_Z)

    def bond_marginal(self):
        return ExactDistribution(self.bonds, self.probs.sum(axis=0), self.log_Z)

    def conditional_spins(self):
        """ Column-normalized matrix P(sigma | eta); columns of zero mass stay zero. """
        mass = self.probs.sum(axis=0)
        return self.probs / np.where(mass > 0, mass, 1.0)


def _as_ghost(graph):
    return graph if isinstance(graph, GhostGraph) else GhostGraph(graph)


def _edge_probs(gg, params):
    return np.concatenate([np.full(gg.n_base_edges, params.p_edge), np.full(gg.n, params.p_ghost)])


def _coupling_total(gg, params):
    return gg.n_base_edges * params.beta + gg.n * params.B


def _spin_table(n, q):
    """ Every coloring of n vertices in code order (vertex 0 most significant), as int8. """
    check_cap(q ** n, Config.ENUMERATION_CAP, f"Spin enumeration on {n} vertices, q={q}")
    codes = np.arange(q ** n, dtype=np.int64)
    out = np.empty((codes.size, n), dtype=np.int8)
    for v in range(n):
        out[:, v] = (codes // q ** (n - 1 - v)) % q
    return out


def _spin_codes(spins, q):
    n = spins.shape[-1]
    return spins.astype(np.int64) @ (q ** np.arange(n - 1, -1, -1, dtype=np.int64))


def _bit_codes(bits):
    m = bits.shape[-1]
    return bits.astype(np.int64) @ (1 << np.arange(m - 1, -1, -1, dtype=np.int64))


def _n_components(labels):
    return (labels == np.arange(labels.shape[1])).sum(axis=1)


def _normalized(log_w):
    with np.errstate(divide='ignore', invalid='ignore'):
        log_total = logsumexp(log_w)
    if not np.isfinite(log_total):
        raise ValueError("Every configuration has zero weight.")
    probs = np.exp(log_w - log_total)
    return probs / probs.sum(), float(log_total)


# =============================================================================
# === Bond Enumeration Engine ===
# =============================================================================

def _enumerate_bonds(eu, ev, p, n_vertices, fixed=None, extra=None, what='bond enumeration'):
    """
    Walks every bond configuration of the edges (eu, ev) in chunks.

    Edges with p = 0 are held closed, `fixed` maps edge positions to forced
    values, and `extra` edges (u, v arrays) are always open and only enter
    the connectivity.

    Yields:
        (mask, log_w, labels): bond bits (N, m), log of prod p^eta (1-p)^(1-eta),
        and component labels of the graph with the extra edges added.
    """
    eu = np.asarray(eu, dtype=np.int64)
    ev = np.asarray(ev, dtype=np.int64)
    p = np.asarray(p, dtype=float)
    m = eu.size
    forced = np.full(m, -1, dtype=np.int8)
    forced[p <= 0.0] = 0
    for pos, value in (fixed or {}).items():
        forced[int(pos)] = 1 if value else 0
    free = np.flatnonzero(forced < 0)
    check_cap(2 ** free.size, Config.ENUMERATION_CAP, what)

    xu, xv = extra if extra is not None else (np.empty(0, np.int64), np.empty(0, np.int64))
    all_u = np.concatenate([eu, np.asarray(xu, dtype=np.int64)])
    all_v = np.concatenate([ev, np.asarray(xv, dtype=np.int64)])
    n_extra = all_u.size - m

    with np.errstate(divide='ignore'):
        log_p = np.log(p)
        log_not = np.log1p(-p)
    shifts = np.arange(free.size - 1, -1, -1, dtype=np.int64)
    total = 1 << free.size
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        mask = np.broadcast_to(forced == 1, (codes.size, m)).copy()
        if free.size:
            mask[:, free] = ((codes[:, None] >> shifts) & 1).astype(bool)
        log_w = np.where(mask, log_p, log_not).sum(axis=1)
        full = np.concatenate([mask, np.ones((codes.size, n_extra), dtype=bool)], axis=1)
        yield mask, log_w, component_labels(full, all_u, all_v, n_vertices)


# =============================================================================
# === Potts / RCM / Edwards-Sokal ===
# =============================================================================

def enumerate_potts(graph, params, vertex_log_weights=None):
    """
    Exact Potts law on a Graph or GhostGraph.

    Args:
        graph (Graph | GhostGraph): With a GhostGraph the ghost is pinned to
            color 1 and the field acts through its edges; the induced law on
            the base spins is the same.
        params (Params): Model parameters (d is ignored).
        vertex_log_weights (np.ndarray | None): Optional (n, q) table that
            replaces the field term vertex by vertex (plain graphs only);
            -inf entries pin colors out.

    Returns:
        ExactDistribution: Rows in pattern-code order.
    """
    q = params.q
    ghosted = isinstance(graph, GhostGraph)
    base = graph.base if ghosted else graph
    spins = _spin_table(base.n, q)

    if ghosted:
        if vertex_log_weights is not None:
            raise ValueError("vertex_log_weights is only supported on graphs without a ghost.")
        configs = np.concatenate([spins, np.zeros((spins.shape[0], 1), dtype=np.int8)], axis=1)
        eu, ev = graph.endpoints
        couplings = np.concatenate([np.full(base.n_edges, params.beta), np.full(base.n, params.B)])
        log_w = (configs[:, eu] == configs[:, ev]).astype(float) @ couplings
    else:
        configs = spins
        if vertex_log_weights is None:
            log_w = params.B * (spins == 0).sum(axis=1)
        else:
            table = np.asarray(vertex_log_weights, dtype=float)
            if table.shape != (base.n, q):
                raise ValueError(f"vertex_log_weights must have shape {(base.n, q)}, got {table.shape}")
            log_w = np.zeros(spins.shape[0])
            for v in range(base.n):
                log_w += table[v, spins[:, v]]
        if base.n_edges:
            agree = spins[:, base.edges[:, 0]] == spins[:, base.edges[:, 1]]
            log_w = log_w + params.beta * agree.sum(axis=1)

    probs, log_Z = _normalized(np.asarray(log_w, dtype=float))
    return ExactDistribution(configs, probs, log_Z)


def enumerate_rcm(graph, params):
    """
    Exact RCM on G* with weights prod p^eta (1-p)^(1-eta) q^|C(eta)|.

    Ghost bonds have p = 0 when B = 0 and are then closed in every row.
    The reported Z is e^{sum beta*_e} Z_RCM / q, the Potts partition function.
    """
    gg = _as_ghost(graph)
    eu, ev = gg.endpoints
    log_q = math.log(params.q)
    masks, log_ws = [], []
    for mask, log_w, labels in _enumerate_bonds(eu, ev, _edge_probs(gg, params), gg.n_vertices,
                                                 what=f"RCM enumeration on {gg.n_edges} bonds"):
        masks.append(mask)
        log_ws.append(log_w + _n_components(labels) * log_q)
    probs, log_total = _normalized(np.concatenate(log_ws))
    return ExactDistribution(np.concatenate(masks), probs, log_total + _coupling_total(gg, params) - log_q)


def _group_by_code(configs, probs):
    codes = _bit_codes(configs)
    unique, first, inverse = np.unique(codes, return_index=True, return_inverse=True)
    grouped = np.bincount(inverse.reshape(-1), weights=probs, minlength=unique.size)
    return configs[first], grouped


def marginal_rcm(graph, params, method='summed'):
    """
    Law of the base bonds of the RCM on G*.

    'summed' adds up the ghost bonds of enumerate_rcm; 'direct' enumerates
    base bonds only with cluster factor prod_C (1 + (q-1) e^{-B|C|}).
    Rows are sorted by bond code in both cases.
    """
    base = graph.base if isinstance(graph, GhostGraph) else graph
    m = base.n_edges
    if method == 'summed':
        full = enumerate_rcm(graph, params)
        configs, probs = _group_by_code(full.configs[:, :m], full.probs)
        return ExactDistribution(configs, probs, full.log_Z)
    if method != 'direct':
        raise ValueError(f"method must be 'summed' or 'direct', got {method!r}")

    q, B = params.q, params.B
    p = np.full(m, params.p_edge)
    masks, log_ws = [], []
    for mask, log_w, labels in _enumerate_bonds(base.edges[:, 0], base.edges[:, 1], p, base.n,
                                                what=f"Marginal RCM enumeration on {m} bonds"):
        rows = np.repeat(np.arange(labels.shape[0]), base.n)
        sizes = np.bincount(rows * base.n + labels.reshape(-1), minlength=labels.shape[0] * base.n)
        sizes = sizes.reshape(labels.shape[0], base.n)
        cluster_terms = np.where(sizes > 0, np.log1p((q - 1) * np.exp(-B * sizes)), 0.0).sum(axis=1)
        masks.append(mask)
        log_ws.append(log_w + cluster_terms)
    masks = np.concatenate(masks)
    log_w = np.concatenate(log_ws)
    order = np.argsort(_bit_codes(masks), kind='stable')
    probs, log_total = _normalized(log_w[order])
    return ExactDistribution(masks[order], probs, log_total + m * params.beta + base.n * params.B)


def _compatibility(spins, bonds, eu, ev):
    """ (Ns, Nb) flags: every open bond of the column joins equal spins of the row. """
    agree = spins[:, eu] == spins[:, ev]
    return (_bit_codes(bonds)[None, :] & ~_bit_codes(agree)[:, None]) == 0


def enumerate_es(graph, params):
    """
    Exact Edwards-Sokal law: weight prod_e e^{beta*_e}[(1-p_e)(1-eta_e) + p_e eta_e delta_e(sigma)]
    with the ghost pinned to color 1. The total mass is the Potts partition function.
    """
    gg = _as_ghost(graph)
    q = params.q
    eu, ev = gg.endpoints
    base_spins = _spin_table(gg.n, q)
    spins = np.concatenate([base_spins, np.zeros((base_spins.shape[0], 1), dtype=np.int8)], axis=1)

    masks, log_ws = [], []
    for mask, log_w, _ in _enumerate_bonds(eu, ev, _edge_probs(gg, params), gg.n_vertices,
                                           what=f"ES bond enumeration on {gg.n_edges} bonds"):
        masks.append(mask)
        log_ws.append(log_w)
    bonds = np.concatenate(masks)
    bond_log_w = np.concatenate(log_ws)
    check_cap(spins.shape[0] * bonds.shape[0], Config.ENUMERATION_CAP,
              f"ES joint table {spins.shape[0]} x {bonds.shape[0]}")

    compatible = _compatibility(spins, bonds, eu, ev)
    log_joint = np.where(compatible, bond_log_w[None, :], -np.inf)
    probs, log_total = _normalized(log_joint.reshape(-1))
    return JointDistribution(spins, bonds, probs.reshape(log_joint.shape),
                             log_total + _coupling_total(gg, params))


def _cluster_uniform_law(gg, spins, bonds, q):
    """ P(sigma | eta): uniform color per non-ghost cluster, ghost cluster colored 1. """
    eu, ev = gg.endpoints
    labels = component_labels(bonds, eu, ev, gg.n_vertices)
    free_clusters = _n_components(labels) - 1
    return _compatibility(spins, bonds, eu, ev) / (float(q) ** free_clusters)[None, :]


# =============================================================================
# === Consistency Residuals ===
# =============================================================================

def potts_ghost_residual(graph, params):
    """ Ghosted vs plain enumeration: max |probability difference| and |log Z difference|. """
    plain = enumerate_potts(graph, params)
    ghosted = enumerate_potts(GhostGraph(graph), params)
    return max(float(np.max(np.abs(plain.probs - ghosted.probs))), abs(plain.log_Z - ghosted.log_Z))


def es_marginal_residual(graph, params):
    """ Spin marginal of ES vs Potts and bond marginal of ES vs RCM, plus the Z agreement. """
    gg = _as_ghost(graph)
    es = enumerate_es(gg, params)
    potts = enumerate_potts(gg, params)
    rcm = enumerate_rcm(gg, params)
    spin_gap = np.max(np.abs(es.spin_marginal().probs - potts.probs))
    rcm_law = rcm.law()
    bond_law = es.bond_marginal()
    bond_gap = max(abs(p - rcm_law.get(tuple(int(x) for x in row), 0.0))
                   for row, p in zip(bond_law.configs, bond_law.probs))
    z_gap = max(abs(math.expm1(es.log_Z - potts.log_Z)), abs(math.expm1(rcm.log_Z - potts.log_Z)))
    return float(max(spin_gap, bond_gap, z_gap))


def theta_factorization_residual(graph, params):
    """ Conditional spin law given bonds under ES vs the cluster-uniform law. """
    gg = _as_ghost(graph)
    es = enumerate_es(gg, params)
    support = es.probs.sum(axis=0) > 0
    expected = _cluster_uniform_law(gg, es.spins, es.bonds[support], params.q)
    return float(np.max(np.abs(es.conditional_spins()[:, support] - expected)))


def correlation_identity_residual(graph, params):
    """ max over e in E* of |mu(sigma_i = sigma_j) - ((1 - 1/q) phi(i <-> j) + 1/q)|. """
    gg = _as_ghost(graph)
    eu, ev = gg.endpoints
    potts = enumerate_potts(gg, params)
    rcm = enumerate_rcm(gg, params)
    agree = potts.probs @ (potts.configs[:, eu] == potts.configs[:, ev]).astype(float)
    labels = component_labels(rcm.configs, eu, ev, gg.n_vertices)
    connected = rcm.probs @ (labels[:, eu] == labels[:, ev]).astype(float)
    q = params.q
    return float(np.max(np.abs(agree - ((1.0 - 1.0 / q) * connected + 1.0 / q)), initial=0.0))


def marginal_rcm_residual(graph, params):
    summed = marginal_rcm(graph, params, method='summed')
    direct = marginal_rcm(graph, params, method='direct')
    direct_law = direct.law()
    gap = max(abs(p - direct_law.get(tuple(int(x) for x in row), 0.0))
              for row, p in zip(summed.configs, summed.probs))
    return float(max(gap, abs(math.expm1(summed.log_Z - direct.log_Z))))


# =============================================================================
# === Restricted Partition Functions ===
# =============================================================================

def _edge_positions(gg, W):
    """ GhostGraph edge indices of W, given as indices or (u, v) pairs (v = gg.ghost for ghost edges). """
    lookup = {(int(u), int(v)): i for i, (u, v) in enumerate(gg.base.edges)}
    out = []
    for item in W:
        if isinstance(item, (int, np.integer)):
            pos = int(item)
        else:
            u, v = sorted((int(item[0]), int(item[1])))
            if v == gg.ghost:
                pos = gg.ghost_edge(u)
            elif (u, v) in lookup:
                pos = lookup[(u, v)]
            else:
                raise ValueError(f"({u}, {v}) is not an edge of the graph.")
        if not 0 <= pos < gg.n_edges:
            raise ValueError(f"Edge index {pos} outside [0, {gg.n_edges})")
        out.append(pos)
    if len(set(out)) != len(out):
        raise ValueError("W lists an edge twice.")
    return np.asarray(out, dtype=np.int64)


def _restriction(gg, W, y, with_ghost_restriction):
    positions = _edge_positions(gg, W)
    y = np.asarray(y, dtype=np.int8).reshape(-1)
    if y.size != positions.size:
        raise ValueError(f"y has {y.size} entries for {positions.size} restricted edges.")
    if not with_ghost_restriction:
        keep = positions < gg.n_base_edges
        positions, y = positions[keep], y[keep]
    return dict(zip(positions.tolist(), y.tolist()))


def log_restricted_Z(graph, W, y, params, with_ghost_restriction=True):
    """ log of restricted_Z; -inf when the restriction has zero weight. """
    gg = _as_ghost(graph)
    eu, ev = gg.endpoints
    fixed = _restriction(gg, W, y, with_ghost_restriction)
    log_q = math.log(params.q)
    terms = [log_w + _n_components(labels) * log_q
             for _, log_w, labels in _enumerate_bonds(eu, ev, _edge_probs(gg, params), gg.n_vertices, fixed=fixed,
                                                      what="restricted partition function")]
    with np.errstate(divide='ignore'):
        total = float(logsumexp(np.concatenate(terms)))
    return total + _coupling_total(gg, params) - log_q


def restricted_Z(graph, W, y, params, with_ghost_restriction=True):
    """
    RCM-restricted partition function

        (1/q) sum_{eta: eta_W = y} q^|C(eta)| prod_{e in E*} e^{beta*_e} p_e^eta_e (1 - p_e)^(1 - eta_e).

    Args:
        graph (Graph | GhostGraph): The graph G (the ghost is added if absent).
        W (iterable): Restricted edges, as GhostGraph edge indices or (u, v)
            pairs with v = n standing for the ghost.
        y (array-like): 0/1 values aligned with W.
        params (Params): Model parameters.
        with_ghost_restriction (bool): When False, ghost edges listed in W
            are released and only the base-edge restriction applies.

    Returns:
        float: The restricted sum; summing over every y gives Z_G(beta, B).
    """
    return math.exp(log_restricted_Z(graph, W, y, params, with_ghost_restriction))


def restricted_z_total_residual(graph, W, params, with_ghost_restriction=True):
    """ |sum_y restricted_Z(y) / Z_G - 1| over every y on W. """
    gg = _as_ghost(graph)
    positions = _edge_positions(gg, list(W))
    if not with_ghost_restriction:
        # released ghost edges are summed inside each term, not over y
        positions = positions[positions < gg.n_base_edges]
    W = positions.tolist()
    k = len(W)
    check_cap(2 ** k, Config.ENUMERATION_CAP, f"restricted-Z totals over {k} edges")
    terms = [log_restricted_Z(gg, W, y, params)
             for y in itertools.product((0, 1), repeat=k)]
    with np.errstate(divide='ignore'):
        log_sum = float(logsumexp(terms))
    return abs(math.expm1(log_sum - enumerate_potts(gg, params).log_Z))


def conditional_connectivity(graph, W, y, params, pairs):
    """ phi(u <-> v | eta_W = y) for each (u, v) in pairs, by enumeration. """
    gg = _as_ghost(graph)
    eu, ev = gg.endpoints
    fixed = _restriction(gg, W, y, True)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    log_q = math.log(params.q)
    log_ws, hits = [], []
    for _, log_w, labels in _enumerate_bonds(eu, ev, _edge_probs(gg, params), gg.n_vertices, fixed=fixed,
                                             what="conditional connectivity"):
        log_ws.append(log_w + _n_components(labels) * log_q)
        hits.append(labels[:, pairs[:, 0]] == labels[:, pairs[:, 1]])
    probs, _ = _normalized(np.concatenate(log_ws))
    return probs @ np.concatenate(hits).astype(float)


# =============================================================================
# === Surgery Identities ===
# =============================================================================

def _annulus_pairs(index, t):
    """ Edges of B*_o(r) minus B*_o(t): tree edges below depth t and ghost edges below depth t. """
    ghost = index.n_vertices
    deep = range(index.level_starts[t + 1], index.n_vertices)
    return [(int(index.parent[c]), c) for c in deep] + [(v, ghost) for v in deep]


def _map_pairs(pairs, mapping, old_ghost, new_ghost):
    return [(int(mapping[u]), new_ghost if v == old_ghost else int(mapping[v])) for u, v in pairs]


def _random_annulus_values(pairs, ghost, params, rng, n_y):
    ys = rng.integers(0, 2, size=(n_y, len(pairs)), dtype=np.int8)
    is_ghost = np.array([v == ghost for _, v in pairs], dtype=bool)
    if params.p_edge == 0.0:
        ys[:, ~is_ghost] = 0
    if params.p_ghost == 0.0:
        ys[:, is_ghost] = 0
    return ys


def surgery_ratio_check(params, r=2, t=1, ys=None, n_y=20, seed=0, perms=None):
    """
    Compares restricted partition-function ratios on the tree ball B_o(r)
    with the Psi functionals of the conditional pre-messages.

    With W the annulus B*_o(r) minus B*_o(t), y a bond assignment on W and
    s_i = phi_{B^-}(u_i <-> v* | eta_W = y) on the ball with o removed:

        Z_{B}(y) / Z_{B^-}(y)     = Psi^vx(s)
        Z_{B^pi}(y) / Z_{B^-}(y)  = Psi^e(s_pi(1), ..., s_pi(d))

    Returns:
        dict: {'vx': max relative residual, 'e': max relative residual or None, 'n_y': count}.
    """
    if not 1 <= t < r:
        raise ValueError(f"Need 1 <= t < r, got t={t}, r={r}")
    d = params.d
    if perms is None:
        perms = [list(range(d)), [0, 2, 1] + list(range(3, d))] if d % 2 == 0 else []

    index = tree_index(d, r)
    full = index.graph()
    minus, mapping = remove_vertex(full, 0)
    w_full = _annulus_pairs(index, t)
    w_minus = _map_pairs(w_full, mapping, full.n, minus.n)
    targets = [(int(mapping[u]), minus.n) for u in index.children(0)]
    if ys is None:
        ys = _random_annulus_values(w_full, full.n, params, np.random.default_rng(seed), n_y)
    surgeries = [(np.asarray(pi), rewire(full, 0, pi)[0]) for pi in perms]

    worst_vx, worst_e = 0.0, 0.0
    for y in ys:
        log_minus = log_restricted_Z(minus, w_minus, y, params)
        if not np.isfinite(log_minus):
            raise ValueError("Annulus assignment has zero weight on the reduced ball.")
        s = conditional_connectivity(minus, w_minus, y, params, targets)
        ratio = math.exp(log_restricted_Z(full, w_full, y, params) - log_minus)
        worst_vx = max(worst_vx, abs(ratio / bethe.psi_vx(s, params) - 1.0))
        for pi, g_pi in surgeries:
            ratio_pi = math.exp(log_restricted_Z(g_pi, w_minus, y, params) - log_minus)
            worst_e = max(worst_e, abs(ratio_pi / bethe.psi_e(s[pi], params) - 1.0))
    logger.debug(f"Surgery check d={d}, r={r}, t={t}: vx={worst_vx:.3g}, e={worst_e:.3g} over {len(ys)} assignments")
    return {'vx': worst_vx, 'e': worst_e if surgeries else None, 'n_y': len(ys)}


# =============================================================================
# === Wired Balls, Boundary Partitions and the Connection Functional ===
# =============================================================================

@dataclass(frozen=True, eq=False)
class WiredBall:
    """
    T*_d(t) with boundary edges on the outer level.

    Random bonds are the tree edges (BFS edge order) followed, when the ghost
    is present, by one ghost edge per vertex. A boundary partition is a list
    of blocks over outer-level positions 0..L-1 (BFS order) and GHOST; every
    block becomes a chain of always-open edges.
    """
    index: TreeIndex
    with_ghost: bool

    @classmethod
    def build(cls, d, t, with_ghost):
        return cls(tree_index(d, t), bool(with_ghost))

    @property
    def n_tree(self):
        return self.index.n_vertices

    @property
    def ghost(self):
        return self.n_tree if self.with_ghost else None

    @property
    def n_vertices(self):
        return self.n_tree + int(self.with_ghost)

    @property
    def n_bonds(self):
        return self.n_tree - 1 + (self.n_tree if self.with_ghost else 0)

    def endpoints(self):
        child = np.arange(1, self.n_tree, dtype=np.int64)
        eu, ev = self.index.parent[1:].astype(np.int64), child
        if self.with_ghost:
            eu = np.concatenate([eu, np.arange(self.n_tree, dtype=np.int64)])
            ev = np.concatenate([ev, np.full(self.n_tree, self.n_tree, dtype=np.int64)])
        return eu, ev

    def bond_probs(self, params):
        p = np.full(self.n_tree - 1, params.p_edge)
        if self.with_ghost:
            p = np.concatenate([p, np.full(self.n_tree, params.p_ghost)])
        return p

    def bond_depths(self):
        """ Depth of the deeper endpoint of every bond (a ghost edge takes its vertex's depth). """
        depth = self.index.depth
        out = depth[1:]
        if self.with_ghost:
            out = np.concatenate([out, depth])
        return out

    def outer(self):
        return self.index.leaves()

    def wired_partition(self):
        block = list(range(self.outer().size))
        return [block + [GHOST]] if self.with_ghost else [block]

    def _vertex(self, site):
        if site == GHOST:
            if not self.with_ghost:
                raise ValueError("Partition uses the ghost on a ball without one.")
            return self.ghost
        outer = self.outer()
        if not 0 <= site < outer.size:
            raise ValueError(f"Boundary position {site} outside [0, {outer.size})")
        return int(outer[site])

    def boundary_edges(self, partition):
        seen = set()
        us, vs = [], []
        for block in partition:
            members = [self._vertex(int(s)) for s in block]
            if seen.intersection(members) or len(set(members)) != len(members):
                raise ValueError(f"Boundary partition blocks overlap: {partition}")
            seen.update(members)
            us.extend(members[:-1])
            vs.extend(members[1:])
        return np.asarray(us, dtype=np.int64), np.asarray(vs, dtype=np.int64)

    def weighted_bonds(self, params, partition=()):
        """ Yields (mask, log weight with q^|C|, labels) of the RCM conditioned on the partition. """
        eu, ev = self.endpoints()
        log_q = math.log(params.q)
        for mask, log_w, labels in _enumerate_bonds(eu, ev, self.bond_probs(params), self.n_vertices,
                                                    extra=self.boundary_edges(partition),
                                                    what=f"wired ball T*_{self.index.d}({self.index.t})"):
            yield mask, log_w + _n_components(labels) * log_q, labels


def _gF_pairs(d, s):
    """ (i, j) with i on level s of T_d(s+1) and j a tree neighbor of i. """
    index = tree_index(d, s + 1)
    pairs = []
    for i in index.level(s):
        i = int(i)
        if i > 0:
            pairs.append((i, int(index.parent[i])))
        pairs.extend((i, int(c)) for c in index.children(i))
    return np.asarray(pairs, dtype=np.int64)


def gF(s, d, bonds, partition=(), with_ghost=True):
    """
    The connection count sum over i on level s and j adjacent to i in T_d(s+1)
    of 1(i <-> j), for one bond configuration of the wired ball T*_d(s+1).
    """
    ball = WiredBall.build(d, s + 1, with_ghost)
    bonds = np.asarray(bonds, dtype=bool).reshape(-1)
    if bonds.size != ball.n_bonds:
        raise ValueError(f"Expected {ball.n_bonds} bonds, got {bonds.size}")
    dsu = DisjointSet(ball.n_vertices)
    eu, ev = ball.endpoints()
    for u, v in zip(eu[bonds], ev[bonds]):
        dsu.union(int(u), int(v))
    for u, v in zip(*ball.boundary_edges(partition)):
        dsu.union(int(u), int(v))
    return sum(1 for i, j in _gF_pairs(d, s) if dsu.connected(int(i), int(j)))


def gF_expectation(partition, params, s=1):
    """ Expectation of gF under the RCM on T*_d(s+1) with the given boundary partition. """
    ball = WiredBall.build(params.d, s + 1, params.B > 0)
    pairs = _gF_pairs(params.d, s)
    log_ws, counts = [], []
    for _, log_w, labels in ball.weighted_bonds(params, partition):
        log_ws.append(log_w)
        counts.append((labels[:, pairs[:, 0]] == labels[:, pairs[:, 1]]).sum(axis=1))
    probs, _ = _normalized(np.concatenate(log_ws))
    return float(probs @ np.concatenate(counts).astype(float))


@dataclass(frozen=True, eq=False)
class BoundaryLaw:
    """
    Law of an induced partition of `sites`, each partition encoded by its
    indicator vector over `pairs` (1 when the two sites share a block).
    Points are sorted lexicographically.
    """
    sites: tuple
    pairs: tuple
    points: np.ndarray
    probs: np.ndarray

    def prob_of(self, point):
        hits = np.all(self.points == np.asarray(point, dtype=np.int8), axis=1)
        return float(self.probs[hits].sum())


def finite_rcm_boundary_law(t, ddagger, params):
    """
    Induced boundary partition of level t (plus v* when B > 0) under the
    free or wired RCM on the wired ball T*_d(t+1).

    The wired ball joins all of level t+1 (and v*) when ddagger = 'wired' and
    adds nothing when ddagger = 'free'. Two sites share a block when they are
    connected through bonds below level t together with the boundary edges.
    At B = 0 the ghost is dropped.
    """
    if ddagger not in ('free', 'wired'):
        raise ValueError(f"ddagger must be 'free' or 'wired', got {ddagger!r}")
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    ball = WiredBall.build(params.d, t + 1, params.B > 0)
    partition = ball.wired_partition() if ddagger == 'wired' else []
    sites = [int(v) for v in tree_index(params.d, t).leaves()]
    if ball.with_ghost:
        sites.append(ball.ghost)
    sites = np.asarray(sites, dtype=np.int64)
    pairs = np.asarray(list(itertools.combinations(range(sites.size), 2)), dtype=np.int64)

    eu, ev = ball.endpoints()
    bu, bv = ball.boundary_edges(partition)
    outer_bonds = ball.bond_depths() > t
    all_u, all_v = np.concatenate([eu, bu]), np.concatenate([ev, bv])

    accumulated = {}
    for mask, log_w, _ in ball.weighted_bonds(params, partition):
        outer_mask = np.concatenate([mask & outer_bonds, np.ones((mask.shape[0], bu.size), dtype=bool)], axis=1)
        labels = component_labels(outer_mask, all_u, all_v, ball.n_vertices)
        site_labels = labels[:, sites]
        keys = _bit_codes(site_labels[:, pairs[:, 0]] == site_labels[:, pairs[:, 1]])
        for key in np.unique(keys):
            chunk = float(logsumexp(log_w[keys == key]))
            accumulated[int(key)] = np.logaddexp(accumulated.get(int(key), -np.inf), chunk)

    keys = np.array(sorted(accumulated), dtype=np.int64)
    probs, _ = _normalized(np.array([accumulated[int(k)] for k in keys]))
    shifts = np.arange(pairs.shape[0] - 1, -1, -1, dtype=np.int64)
    points = ((keys[:, None] >> shifts) & 1).astype(np.int8)
    return BoundaryLaw(tuple(sites.tolist()), tuple(map(tuple, pairs.tolist())), points, probs)


def align_laws(law_a, law_b):
    """ Common point set (sorted) with both probability vectors. """
    if law_a.pairs != law_b.pairs:
        raise ValueError("Boundary laws live on different site pairs.")
    table = {}
    for which, law in enumerate((law_a, law_b)):
        for point, p in zip(law.points, law.probs):
            table.setdefault(tuple(int(x) for x in point), [0.0, 0.0])[which] += float(p)
    keys = sorted(table)
    return (np.asarray(keys, dtype=np.int8).reshape(len(keys), -1),
            np.array([table[k][0] for k in keys]), np.array([table[k][1] for k in keys]))


# =============================================================================
# === Stochastic Order ===
# =============================================================================

@dataclass(frozen=True, eq=False)
class OrderResult:
    feasible: bool
    coupling: np.ndarray
    shortfall: float


def stochastic_order(points, dist_a, dist_b, slack=None):
    """
    Decides dist_a <= dist_b in the coordinatewise order on `points` by
    max-flow on the transport graph whose middle arcs (i -> j) exist only
    for points[i] <= points[j].

    Args:
        points (array-like): (K, P) 0/1 indicator vectors.
        dist_a, dist_b (array-like): Probabilities aligned with points.
        slack (float): Allowed unrouted mass; defaults to Config.FLOW_SLACK.

    Returns:
        OrderResult: feasibility, the (K, K) coupling carried by the flow,
        and the unrouted mass.
    """
    pts = np.asarray(points, dtype=np.int64)
    pa = np.asarray(dist_a, dtype=float)
    pb = np.asarray(dist_b, dtype=float)
    k = pts.shape[0]
    if pa.shape != (k,) or pb.shape != (k,):
        raise ValueError(f"Distributions must have {k} entries.")
    for name, dist in (('dist_a', pa), ('dist_b', pb)):
        if np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} is not a probability vector.")
    slack = Config.FLOW_SLACK if slack is None else slack
    scale = 2 ** 40

    cap_a = np.floor(pa * scale).astype(np.int64)
    cap_b = np.floor(pb * scale).astype(np.int64)
    flow_graph = nx.DiGraph()
    flow_graph.add_nodes_from(['source', 'sink'])
    for i in np.flatnonzero(cap_a):
        flow_graph.add_edge('source', ('a', int(i)), capacity=int(cap_a[i]))
    for j in np.flatnonzero(cap_b):
        flow_graph.add_edge(('b', int(j)), 'sink', capacity=int(cap_b[j]))
    below = np.all(pts[:, None, :] <= pts[None, :, :], axis=2)
    for i, j in np.argwhere(below & (cap_a > 0)[:, None] & (cap_b > 0)[None, :]):
        flow_graph.add_edge(('a', int(i)), ('b', int(j)))

    value, flow = nx.maximum_flow(flow_graph, 'source', 'sink')
    demand = int(min(cap_a.sum(), cap_b.sum()))
    shortfall = (demand - value) / scale
    coupling = np.zeros((k, k))
    for i in np.flatnonzero(cap_a):
        for node, amount in flow.get(('a', int(i)), {}).items():
            coupling[i, node[1]] = amount / scale
    feasible = shortfall <= slack + k / scale
    return OrderResult(bool(feasible), coupling, float(max(shortfall, 0.0)))


# =============================================================================
# === Ghost Boundary Decay ===
# =============================================================================

def _first_descendant(index, v, levels):
    for _ in range(levels):
        v = int(index.child_start[v])
    return v


def _log_ghost_star(sizes, params):
    """ log of q e^{-Bn} + 1 - e^{-Bn}: the ghost edges of an n-vertex tree cluster summed out. """
    return np.log1p((params.q - 1) * np.exp(-params.B * np.asarray(sizes, dtype=float)))


def _ghost_decay_enumerated(params, t, s, block):
    """ Every tree and ghost bond enumerated explicitly. """
    ball = WiredBall.build(params.d, t + s, True)
    u, v = (int(x) for x in tree_index(params.d, t).leaves()[:2])
    partition = [block]
    eu, ev = ball.endpoints()
    bu, bv = ball.boundary_edges(partition)
    outer_bonds = ball.bond_depths() > t
    all_u, all_v = np.concatenate([eu, bu]), np.concatenate([ev, bv])
    log_ws, hits = [], []
    for mask, log_w, _ in ball.weighted_bonds(params, partition):
        outer_mask = np.concatenate([mask & outer_bonds, np.ones((mask.shape[0], bu.size), dtype=bool)], axis=1)
        labels = component_labels(outer_mask, all_u, all_v, ball.n_vertices)
        log_ws.append(log_w)
        hits.append((labels[:, u] == labels[:, v]) & (labels[:, u] != labels[:, ball.ghost]))
    probs, _ = _normalized(np.concatenate(log_ws))
    return float(probs @ np.concatenate(hits).astype(float))


def _ghost_decay_star_summed(params, t, s, block):
    """
    Tree bonds only; every cluster's ghost edges are summed out.

    With C the tree cluster of u and A its part reached by outer bonds, A
    avoids the ghost iff the k ghost edges on A's outer vertices are closed,
    which rescales the ghost-star factor of C by e^{-Bk} f(|C| - k) / f(|C|).
    """
    ball = WiredBall.build(params.d, t + s, False)
    n = ball.n_vertices
    u, v = (int(x) for x in tree_index(params.d, t).leaves()[:2])
    eu, ev = ball.endpoints()
    bu, bv = ball.boundary_edges([block])
    outer_bonds = ball.bond_depths() > t
    outer_vertex = ball.index.depth > t
    all_u, all_v = np.concatenate([eu, bu]), np.concatenate([ev, bv])
    log_ws, log_hits = [], []
    for mask, log_w, labels in _enumerate_bonds(eu, ev, ball.bond_probs(params), n, extra=(bu, bv),
                                                what=f"tree ball T_{params.d}({t + s})"):
        rows = np.arange(mask.shape[0])
        sizes = np.bincount((labels + (rows * n)[:, None]).ravel(), minlength=rows.size * n).reshape(-1, n)
        log_star = np.where(sizes > 0, _log_ghost_star(sizes, params), 0.0).sum(axis=1)
        outer_mask = np.concatenate([mask & outer_bonds, np.ones((mask.shape[0], bu.size), dtype=bool)], axis=1)
        reach = component_labels(outer_mask, all_u, all_v, n)
        in_a = reach == reach[:, [u]]
        k = (in_a & outer_vertex).sum(axis=1)
        size_c = sizes[rows, labels[:, u]]
        log_hit = -params.B * k + _log_ghost_star(size_c - k, params) - _log_ghost_star(size_c, params)
        log_ws.append(log_w + log_star)
        log_hits.append(np.where(in_a[:, v], log_hit, -np.inf))
    probs, _ = _normalized(np.concatenate(log_ws))
    return float(probs @ np.exp(np.concatenate(log_hits)))


def ghost_decay_probe(params, t=1, s=1, sum_ghost_star=True):
    """
    On T*_d(t+s) with a boundary block joining descendants of two level-t
    vertices u, v (and not v*), the probability that the cluster of u built
    from bonds outside T*_d(t) reaches v but not v*; bounded by q^2 e^{-2Bs}.

    Args:
        params (Params): Needs B > 0.
        t, s (int): Inner depth and the number of levels below it.
        sum_ghost_star (bool): Sum the ghost edges out per cluster, so only
            the tree bonds are enumerated; False enumerates them too.

    Returns:
        dict: {'probability', 'bound'}.
    """
    if params.B <= 0:
        raise ValueError("The ghost decay bound needs B > 0.")
    index = tree_index(params.d, t + s)
    u, v = (int(x) for x in tree_index(params.d, t).leaves()[:2])
    first_outer = index.level_starts[t + s]
    block = [_first_descendant(index, u, s) - first_outer, _first_descendant(index, v, s) - first_outer]
    compute = _ghost_decay_star_summed if sum_ghost_star else _ghost_decay_enumerated
    probability = compute(params, t, s, block)
    logger.debug(f"Ghost decay d={params.d}, t={t}, s={s}: {probability:.6g}")
    return {'probability': probability, 'bound': params.q ** 2 * math.exp(-2.0 * params.B * s)}


# =============================================================================
# === Swendsen-Wang Kernel and Dominant-Color Conditioning ===
# =============================================================================

def sw_transition_matrix(graph, params):
    """
    Exact one-sweep Swendsen-Wang kernel on ghosted spin configurations,
    composed from the sampler's bond-opening probabilities and the
    cluster-uniform recoloring.
    """
    gg = _as_ghost(graph)
    q = params.q
    eu, ev = gg.endpoints
    base_spins = _spin_table(gg.n, q)
    spins = np.concatenate([base_spins, np.zeros((base_spins.shape[0], 1), dtype=np.int8)], axis=1)
    m = gg.n_edges
    check_cap(spins.shape[0] * 2 ** m * max(m, 1), Config.ENUMERATION_CAP, f"SW kernel on {gg.n} vertices")

    codes = np.arange(2 ** m, dtype=np.int64)
    bonds = ((codes[:, None] >> np.arange(m - 1, -1, -1, dtype=np.int64)) & 1).astype(bool)
    open_p = sampler.edge_open_probabilities(gg, spins, params)
    with np.errstate(divide='ignore'):
        log_open = np.log(open_p)
        log_closed = np.log1p(-open_p)
    log_bond = np.where(bonds[None, :, :], log_open[:, None, :], log_closed[:, None, :]).sum(axis=2)
    bond_given_spin = np.exp(log_bond)
    spin_given_bond = _cluster_uniform_law(gg, spins, bonds, q).T
    return bond_given_spin @ spin_given_bond


def sw_stationarity_residual(graph, params):
    """ max |mu K - mu| together with the row-sum defect of K. """
    gg = _as_ghost(graph)
    kernel = sw_transition_matrix(gg, params)
    mu = enumerate_potts(gg, params).probs
    return float(max(np.max(np.abs(mu @ kernel - mu)), np.max(np.abs(kernel.sum(axis=1) - 1.0))))


def dominant_conditioning_residual(graph, params, k):
    """
    Pushforward of the Potts law under sigma -> (K(sigma) k) sigma, with the
    uniform tie-break of K integrated, against q mu(sigma, K = k).
    """
    if params.B != 0.0:
        raise ValueError("Dominant-color conditioning requires B = 0.")
    q = params.q
    if not 0 <= k < q:
        raise ValueError(f"Color {k} outside [0, {q})")
    base = graph.base if isinstance(graph, GhostGraph) else graph
    potts = enumerate_potts(base, params)
    counts = sampler.color_counts(potts.configs, q)
    top = counts == counts.max(axis=1, keepdims=True)
    tie_share = top / top.sum(axis=1, keepdims=True)

    target = q * potts.probs * tie_share[:, k]
    pushed = np.zeros_like(target)
    for j in range(q):
        moved = sampler.transpose_colors(potts.configs, j, k)
        np.add.at(pushed, _spin_codes(moved, q), potts.probs * tie_share[:, j])
    return float(max(np.max(np.abs(pushed - target)), abs(target.sum() - 1.0)))


# =============================================================================
# === Simultaneous Uniform Coloring ===
# =============================================================================

def sim_unif_check(M, q):
    """
    Exhaustive law of (Y_1, ..., Y_M) produced by the multinomial split into
    equal core sets B_k and remainders, colored through a uniform permutation
    of the remainders. Returns the max deviation from q^{-M}.
    """
    if M < 0:
        raise ValueError(f"M must be >= 0, got {M}")
    if M == 0:
        return 0.0
    n_perm = math.factorial(q)
    check_cap((2 * q) ** M * n_perm, Config.ENUMERATION_CAP, f"sim-unif enumeration M={M}, q={q}")

    # label j < q puts site i in B_j, label q + j in the remainder of color class j
    labels = _spin_table(M, 2 * q).astype(np.int64)
    core_sizes = np.stack([(labels == j).sum(axis=1) for j in range(q)], axis=1)
    rest_sizes = np.stack([(labels == q + j).sum(axis=1) for j in range(q)], axis=1)
    m_star = core_sizes[:, 0]
    valid = np.all(core_sizes == m_star[:, None], axis=1) & np.any(rest_sizes == 0, axis=1)
    labels, core_sizes, rest_sizes, m_star = labels[valid], core_sizes[valid], rest_sizes[valid], m_star[valid]

    totals = core_sizes + rest_sizes
    log_partitions = gammaln(M + 1) - q * gammaln(m_star + 1) - gammaln(rest_sizes + 1).sum(axis=1)
    weight = multinomial.pmf(totals, M, np.full(q, 1.0 / q)) * np.exp(-log_partitions) / n_perm

    law = np.zeros(q ** M)
    is_core = labels < q
    for gamma in itertools.permutations(range(q)):
        inverse = np.argsort(gamma)
        colors = np.where(is_core, labels, inverse[np.clip(labels - q, 0, None)])
        np.add.at(law, _spin_codes(colors, q), weight)
    return float(np.max(np.abs(law - float(q) ** (-M))))


# =============================================================================
# === Tree Exactness ===
# =============================================================================

def tree_exactness_residual(t, boundary, params):
    """
    Max pattern-probability error of treeexact.neighborhood_law(t_report, t)
    for every t_report <= t against brute-force enumeration on T_d(t).
    """
    index = tree_index(params.d, t)
    graph = index.graph()
    if boundary.kind is treeexact.BoundaryKind.FIXEDPOINT_WIRED and params.B == 0.0:
        parts = [treeexact.BoundarySpec.fixed_point_color(k) for k in range(params.q)]
    else:
        parts = [boundary]
    probs = 0.0
    for part in parts:
        weights = np.tile(treeexact.field_log_weights(params), (index.n_vertices, 1))
        weights[index.leaves()] = treeexact.leaf_log_weights(part, params)
        probs = probs + enumerate_potts(graph, params, vertex_log_weights=weights).probs / len(parts)
    exact = NeighborhoodLaw(params.d, t, params.q, probs, normalized_tol=1e-10)
    worst = 0.0
    for t_report in range(t + 1):
        law = treeexact.neighborhood_law(t_report, t, boundary, params)
        worst = max(worst, float(np.max(np.abs(law.probs - exact.marginal(t_report).probs))))
    return worst


def fixed_point_formula_residual(params, t_max=6):
    """ Message-passing root and edge laws at fixed-point boundaries vs the closed forms. """
    worst = 0.0
    for ddagger in ('free', 'wired'):
        if ddagger == 'wired' and params.B == 0.0:
            boundary = treeexact.BoundarySpec.fixed_point_color(0)
        else:
            boundary = treeexact.BoundarySpec.fixed_point(ddagger)
        root = treeexact.fixed_point_root_formula(ddagger, params)
        pair = treeexact.fixed_point_pair_formula(ddagger, params)
        for t in range(1, t_max + 1):
            worst = max(worst,
                        float(np.max(np.abs(treeexact.root_marginal(t, boundary, params) - root))),
                        float(np.max(np.abs(treeexact.pair_marginal(t, boundary, params) - pair))))
    return worst


# =============================================================================
# === Suite Runner ===
# =============================================================================

def check_row(check_name, instance, residual, tol=_DEFAULT_TOL):
    residual = float(residual)
    return {'check_name': check_name, 'instance': instance, 'max_residual': residual,
            'pass': bool(np.isfinite(residual) and residual < tol)}


def random_small_graph(rng, max_n=5):
    n = int(rng.integers(1, max_n + 1))
    candidates = list(itertools.combinations(range(n), 2))
    keep = rng.random(len(candidates)) < 0.5
    return Graph.from_edges(n, [e for e, k in zip(candidates, keep) if k])


def _random_params(rng, n):
    q = 2 if n >= 5 else int(rng.choice([2, 3]))
    B = 0.0 if rng.random() < 0.2 else float(rng.uniform(0.0, 1.0))
    return Params(q, 3, float(rng.uniform(0.0, 2.0)), B)


def _graph_checks(index, graph, params, rng):
    name = f"graph{index}(n={graph.n},m={graph.n_edges},q={params.q},beta={params.beta:.4f},B={params.B:.4f})"
    rows = [
        check_row('potts_ghost_agreement', name, potts_ghost_residual(graph, params)),
        check_row('es_marginals', name, es_marginal_residual(graph, params)),
        check_row('theta_factorization', name, theta_factorization_residual(graph, params)),
        check_row('correlation_identity', name, correlation_identity_residual(graph, params)),
        check_row('marginal_rcm_dual', name, marginal_rcm_residual(graph, params)),
    ]
    gg = GhostGraph(graph)
    width = int(rng.integers(0, min(3, gg.n_edges) + 1))
    W = sorted(rng.choice(gg.n_edges, size=width, replace=False).tolist()) if width else []
    for flag in (True, False):
        rows.append(check_row('restricted_z_total', f"{name},W={W},ghost_restricted={flag}",
                         restricted_z_total_residual(gg, W, params, with_ghost_restriction=flag)))
    if graph.n <= 4:
        rows.append(check_row('sw_stationarity', name, sw_stationarity_residual(graph, params)))
        zero_field = params.replace(B=0.0)
        k = int(rng.integers(0, params.q))
        rows.append(check_row('dominant_conditioning', f"{name},B=0,k={k + 1}",
                         dominant_conditioning_residual(graph, zero_field, k)))
    return rows


def _tree_checks():
    rows = []
    points = [(0.3, 0.0), (0.8, 0.0), (1.4, 0.0), (2.0, 0.0), (0.5, 0.1),
              (1.0, 0.2), (1.5, 0.05), (0.2, 1.0), (1.2, 0.5), (2.5, 0.3)]
    Bound = treeexact.BoundarySpec
    for beta, B in points:
        for q, t in ((2, 1), (2, 2), (3, 1), (3, 2)):
            params = Params(q, 3, beta, B)
            kinds = [Bound.free(), Bound.color(0), Bound.color(q - 1),
                     Bound.fixed_point('free'), Bound.fixed_point('wired')]
            if B == 0.0:
                kinds.append(Bound.fixed_point_color(q - 1))
            for boundary in kinds:
                rows.append(check_row('tree_exactness', f"T_3({t}),q={q},beta={beta},B={B},{boundary.label()}",
                                 tree_exactness_residual(t, boundary, params), tol=1e-12))
        rows.append(check_row('fixed_point_formulas', f"q=3,d=3,beta={beta},B={B}",
                         fixed_point_formula_residual(Params(3, 3, beta, B)), tol=1e-10))
    for beta, B in points[:2]:
        params = Params(2, 3, beta, B)
        rows.append(check_row('tree_exactness', f"T_3(3),q=2,beta={beta},B={B},FREE",
                         tree_exactness_residual(3, Bound.free(), params), tol=1e-12))
    return rows


def _lattice_checks():
    rows = []
    params = Params(3, 3, 1.0, 0.2)
    free = finite_rcm_boundary_law(1, 'free', params)
    wired = finite_rcm_boundary_law(1, 'wired', params)
    points, pa, pb = align_laws(free, wired)
    result = stochastic_order(points, pa, pb)
    rows.append(check_row('stochastic_order_free_wired', 't=1,d=3,q=3,beta=1,B=0.2',
                     result.shortfall if result.feasible else 1.0))

    ball = WiredBall.build(params.d, 2, True)
    fine = gF_expectation([], params)
    paired = gF_expectation([[0, ball.outer().size - 1]], params)
    coarse = gF_expectation(ball.wired_partition(), params)
    rows.append(check_row('gF_strict_order', 's=1,d=3,q=3,beta=1,B=0.2,free<pair',
                     max(0.0, fine - paired) + float(fine >= paired)))
    rows.append(check_row('gF_strict_order', 's=1,d=3,q=3,beta=1,B=0.2,pair<wired',
                     max(0.0, paired - coarse) + float(paired >= coarse)))

    decay_params = Params(3, 3, 1.0, 2.0)
    for s in (1, 2):
        decay = ghost_decay_probe(decay_params, t=1, s=s)
        rows.append(check_row('ghost_decay', f'd=3,t=1,s={s},q=3,beta=1,B=2',
                              max(0.0, decay['probability'] - decay['bound'])))
    return rows


def _surgery_checks(seed):
    rows = []
    for beta, B in ((0.8, 0.3), (0.0, 0.3)):
        params = Params(3, 4, beta, B)
        result = surgery_ratio_check(params, r=2, t=1, n_y=20, seed=seed)
        instance = f"d=4,q=3,r=2,t=1,beta={beta},B={B}"
        rows.append(check_row('surgery_vertex', instance, result['vx']))
        rows.append(check_row('surgery_edge', instance, result['e']))
    return rows


def _guarded(section, fn, *args):
    try:
        return fn(*args)
    except (PottsError, ValueError, RuntimeError) as e:
        logger.error(f"Oracle section {section} raised: {e}", exc_info=True)
        return [error_row(section, 'section', e)]


def run_oracle_suite(seed=0, n_graphs=50):
    """
    Runs every exact check and returns JSON-ready rows
    {check_name, instance, max_residual, pass}. A section that raises is
    reported as one failed row.
    """
    rng = np.random.default_rng(seed)
    rows = []
    logger.info(f"Oracle suite: {n_graphs} random graphs (seed={seed})")
    for i in range(n_graphs):
        graph = random_small_graph(rng)
        rows.extend(_guarded(f'graph{i}', _graph_checks, i, graph, _random_params(rng, graph.n), rng))

    logger.info("Oracle suite: tree exactness")
    rows.extend(_guarded('tree_checks', _tree_checks))
    logger.info("Oracle suite: boundary lattice, connection functional, ghost decay")
    rows.extend(_guarded('lattice_checks', _lattice_checks))
    logger.info("Oracle suite: surgery identities")
    rows.extend(_guarded('surgery_checks', _surgery_checks, seed))
    logger.info("Oracle suite: simultaneous uniform coloring")
    for q in (2, 3):
        for M in range(0, 7):
            rows.append(check_row('sim_unif', f"M={M},q={q}", sim_unif_check(M, q), tol=1e-12))

    failed = [r for r in rows if not r['pass']]
    for r in failed:
        logger.warning(f"Oracle check failed: {r['check_name']} [{r['instance']}] residual={r['max_residual']:.3g}")
    logger.info(f"Oracle suite finished: {len(rows) - len(failed)}/{len(rows)} checks passed")
    return rows

# --- END OF FILE: analysis/oracle.py ---
