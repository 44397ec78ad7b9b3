# --- Start of File: analysis/graphgen.py ---
"""
Random d-regular graphs, ball extraction with tree-isomorphism tests, vertex
surgery and a spectral expansion certificate.
"""
from __future__ import annotations

import enum
import logging
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from analysis.core import Graph, GraphGenerationError, SurgeryError, tree_ball_size, tree_index
from config import Config

logger = logging.getLogger(__name__)


class GenModel(enum.Enum):
    CONFIGURATION = 'CONFIGURATION'
    PERMUTATION = 'PERMUTATION'


@dataclass(frozen=True)
class GenSpec:
    n: int
    d: int
    model: GenModel = GenModel.CONFIGURATION
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'model', GenModel(self.model))
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.n <= self.d:
            raise ValueError(f"A simple {self.d}-regular graph needs n > d, got n={self.n}")
        if self.model is GenModel.CONFIGURATION and (self.n * self.d) % 2:
            raise ValueError(f"n*d must be even for the configuration model, got n={self.n}, d={self.d}")
        if self.model is GenModel.PERMUTATION and self.d % 2:
            raise ValueError(f"The permutation model needs even d, got d={self.d}")

    def to_dict(self):
        return {'n': self.n, 'd': self.d, 'model': self.model.value, 'seed': self.seed}

    @classmethod
    def from_dict(cls, raw):
        return cls(int(raw['n']), int(raw['d']), GenModel(raw.get('model', 'CONFIGURATION')), int(raw.get('seed', 0)))


# =============================================================================
# === Generation ===
# =============================================================================

def _is_simple(pairs, n):
    if np.any(pairs[:, 0] == pairs[:, 1]):
        return False
    ordered = np.sort(pairs, axis=1)
    keys = ordered[:, 0] * n + ordered[:, 1]
    return np.unique(keys).size == keys.size


def _configuration_attempt(spec, rng):
    stubs = np.repeat(np.arange(spec.n, dtype=np.int64), spec.d)
    pairs = rng.permutation(stubs).reshape(-1, 2)
    return pairs if _is_simple(pairs, spec.n) else None


def _permutation_attempt(spec, rng):
    base = np.arange(spec.n, dtype=np.int64)
    blocks = []
    for _ in range(spec.d // 2):
        perm = rng.permutation(spec.n)
        if np.any(perm == base) or np.any(perm[perm] == base):
            return None
        blocks.append(np.stack([base, perm], axis=1))
    pairs = np.concatenate(blocks)
    return pairs if _is_simple(pairs, spec.n) else None


def random_regular(spec, retry_budget=None):
    """
    Samples a simple d-regular graph by reject-and-restart.

    Args:
        spec (GenSpec): Size, degree, model and seed.
        retry_budget (int): Maximum attempts before giving up.

    Returns:
        Graph: Deterministic given the GenSpec.

    Raises:
        GraphGenerationError: If every attempt produced a loop or parallel edge.
    """
    budget = Config.GEN_RETRY_BUDGET if retry_budget is None else retry_budget
    rng = np.random.default_rng(spec.seed)
    attempt_fn = _configuration_attempt if spec.model is GenModel.CONFIGURATION else _permutation_attempt
    for attempt in range(1, budget + 1):
        pairs = attempt_fn(spec, rng)
        if pairs is not None:
            graph = Graph.from_edges(spec.n, pairs)
            degrees = graph.degrees()
            if degrees.max(initial=0) != spec.d or degrees.min(initial=spec.d) != spec.d:
                raise GraphGenerationError(f"Generated graph is not {spec.d}-regular")
            logger.info(f"Generated {spec.model.value} graph n={spec.n}, d={spec.d}, seed={spec.seed} after {attempt} attempt(s)")
            return graph
    raise GraphGenerationError(f"No simple graph for {spec} within {budget} attempts")


# =============================================================================
# === Balls ===
# =============================================================================

@dataclass(frozen=True)
class Ball:
    vertices: np.ndarray
    subgraph: Graph
    is_tree_isomorphic: bool


def _bfs(G, v, t):
    order = [v]
    depth = {v: 0}
    queue = deque([v])
    while queue:
        u = queue.popleft()
        if depth[u] == t:
            continue
        for w in G.neighbors(u):
            w = int(w)
            if w not in depth:
                depth[w] = depth[u] + 1
                order.append(w)
                queue.append(w)
    return order, depth


def ball(G, v, t, d=None):
    """
    Ball of radius t around v with the induced subgraph (relabeled in BFS
    order) and whether it is isomorphic to T_d(t). Matching the vertex count
    alone is not enough (K_4 at t = 1), so the induced edge count and the
    degrees of interior vertices are checked too.
    """
    d = G.degree(v) if d is None else d
    order, depth = _bfs(G, int(v), t)
    position = {u: i for i, u in enumerate(order)}
    edges = []
    for u in order:
        for w in G.neighbors(u):
            w = int(w)
            if w in position and u < w:
                edges.append((position[u], position[w]))
    sub = Graph.from_edges(len(order), edges)
    if t == 0:
        iso = True
    else:
        expected = 1 + 2 * t if d == 2 else tree_ball_size(d, t)
        iso = (d >= 2 and len(order) == expected and sub.n_edges == len(order) - 1
               and all(G.degree(u) == d for u in order if depth[u] < t))
    return Ball(np.asarray(order, dtype=np.int64), sub, bool(iso))


def ball_order(G, v, t, d):
    """
    Graph vertices of B_v(t) listed in the canonical TreeIndex order
    (children sorted by vertex id), or None when B_v(t) is not a tree.
    """
    index = tree_index(d, t)
    out = np.empty(index.n_vertices, dtype=np.int64)
    out[0] = v
    parent_of = {int(v): -1}
    for pos in range(index.level_starts[t]):
        u = int(out[pos])
        nbrs = [int(w) for w in G.neighbors(u) if int(w) != parent_of[u]]
        if len(nbrs) != int(index.child_count[pos]):
            return None
        start = int(index.child_start[pos])
        for j, w in enumerate(sorted(nbrs)):
            if w in parent_of:
                return None
            parent_of[w] = u
            out[start + j] = w
    # the induced subgraph must not join two leaves
    for pos in range(index.level_starts[t], index.n_vertices):
        u = int(out[pos])
        for w in G.neighbors(u):
            w = int(w)
            if w != parent_of[u] and w in parent_of:
                return None
    return out


def _padded_neighbors(G, min_width):
    """ (n, width) sorted neighbor table padded with the sentinel n. """
    deg = G.degrees()
    width = max(int(deg.max(initial=0)), min_width)
    table = np.full((G.n, width), G.n, dtype=np.int64)
    rows = np.repeat(np.arange(G.n, dtype=np.int64), deg)
    table[rows, np.arange(G.indices.size, dtype=np.int64) - G.indptr[rows]] = G.indices
    return table, deg


def _iter_ball_orders(G, t, d):
    """
    Yields (roots, orders, ok) over chunks of root vertices; orders[i] is the
    ball_order of roots[i] where ok[i] holds and junk elsewhere. Every root of
    a chunk is expanded level by level at once on the padded CSR table.
    """
    index = tree_index(d, t)
    nv, n = index.n_vertices, G.n
    table, deg = _padded_neighbors(G, d + 1)
    chunk = max(1, (1 << 22) // (nv * table.shape[1]))
    first_leaf = int(index.level_starts[t])
    leaf_parents = index.parent[first_leaf:] if t > 0 else None
    for start in range(0, n, chunk):
        roots = np.arange(start, min(n, start + chunk), dtype=np.int64)
        c = roots.size
        out = np.zeros((c, nv), dtype=np.int64)
        out[:, 0] = roots
        ok = np.ones(c, dtype=bool)
        for pos in range(first_leaf):
            u = out[:, pos]
            k = int(index.child_count[pos])
            cand = table[u]
            if pos > 0:
                ok &= deg[u] == k + 1
                cand = np.where(cand == out[:, [int(index.parent[pos])]], n, cand)
            else:
                ok &= deg[u] == k
            cand = np.sort(cand, axis=1)[:, :k]
            child = int(index.child_start[pos])
            out[:, child:child + k] = np.where(cand < n, cand, 0)
        ranked = np.sort(out, axis=1)
        ok &= np.all(ranked[:, 1:] != ranked[:, :-1], axis=1)
        if t > 0:
            # the induced subgraph must not join two leaves
            rows = np.arange(c, dtype=np.int64)[:, None, None]
            leaf_nbrs = table[out[:, first_leaf:]]
            leaf_nbrs = np.where(leaf_nbrs == out[:, leaf_parents][:, :, None], n, leaf_nbrs)
            in_ball = np.isin(rows * (n + 1) + leaf_nbrs, (rows[:, :, 0] * (n + 1) + out).ravel())
            ok &= ~in_ball.any(axis=(1, 2))
        yield roots, out, ok


def ball_orders(G, t, d):
    """ Canonical orders for every vertex; rows of -1 where the ball is not a tree. """
    nv = tree_ball_size(d, t)
    out = np.full((G.n, nv), -1, dtype=np.int64)
    for roots, orders, ok in _iter_ball_orders(G, t, d):
        out[roots[ok]] = orders[ok]
    return out


def tree_like_mask(G, t, d=None):
    """ Per-vertex flags B_v(t) ~ T_d(t). """
    d = int(G.degrees().max(initial=0)) if d is None else d
    mask = np.zeros(G.n, dtype=bool)
    for roots, _, ok in _iter_ball_orders(G, t, d):
        mask[roots] = ok
    return mask


def tree_ball_graph(d, r):
    return tree_index(d, r).graph()


# =============================================================================
# === Surgery ===
# =============================================================================

def remove_vertex(G, w):
    """
    Deletes w and its edges. Returns (graph, mapping) with mapping[old] the
    new index (-1 for w).
    """
    w = int(w)
    if not 0 <= w < G.n:
        raise ValueError(f"Vertex {w} outside [0, {G.n})")
    mapping = np.arange(G.n, dtype=np.int64)
    mapping[w] = -1
    mapping[w + 1:] -= 1
    keep = (G.edges[:, 0] != w) & (G.edges[:, 1] != w)
    return Graph.from_edges(G.n - 1, mapping[G.edges[keep]]), mapping


def rewire(G, w, pi):
    """
    G^pi(w): removes w and joins its neighbors x_{pi(2i-1)}, x_{pi(2i)}
    (neighbors taken in increasing order, pi 0-based).
    """
    nbrs = np.sort(G.neighbors(int(w)))
    k = nbrs.size
    if k % 2:
        raise SurgeryError(f"Rewiring needs even degree at {w}, got {k}")
    pi = np.asarray(pi, dtype=np.int64)
    if sorted(pi.tolist()) != list(range(k)):
        raise ValueError(f"pi must be a permutation of range({k}), got {pi.tolist()}")
    reduced, mapping = remove_vertex(G, w)
    ordered = mapping[nbrs[pi]]
    new_edges = ordered.reshape(-1, 2)
    existing = {tuple(e) for e in reduced.edge_list()}
    for a, b in new_edges:
        if (min(a, b), max(a, b)) in existing:
            raise SurgeryError(f"Rewiring would create a parallel edge between {a} and {b}")
    edges = np.concatenate([reduced.edges, new_edges]) if reduced.n_edges else new_edges
    try:
        return Graph.from_edges(reduced.n, edges), mapping
    except ValueError as e:
        raise SurgeryError(f"Rewiring produced a non-simple graph: {e}") from e


# =============================================================================
# === Expansion ===
# =============================================================================

def adjacency_matrix(G):
    rows = np.concatenate([G.edges[:, 0], G.edges[:, 1]])
    cols = np.concatenate([G.edges[:, 1], G.edges[:, 0]])
    data = np.ones(rows.size)
    return sparse.csr_matrix((data, (rows, cols)), shape=(G.n, G.n))


def expansion_estimate(G, max_iter=5000, tol=1e-10, seed=0):
    """
    Spectral certificate (d - lambda_2)/2 for a connected regular graph.

    Power iteration runs on A + d I restricted to the complement of the
    constant vector, so it converges to lambda_2 + d.

    Returns:
        dict: {'lambda_2', 'certificate', 'iterations'}.
    """
    if G.n < 2:
        raise ValueError("Expansion needs at least two vertices")
    adj = adjacency_matrix(G)
    n_comp, _ = connected_components(adj, directed=False)
    if n_comp != 1:
        raise ValueError(f"expansion_estimate needs a connected graph, got {n_comp} components")
    d = float(G.degrees().max())
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(G.n)
    x -= x.mean()
    x /= np.linalg.norm(x)
    rayleigh = np.nan
    it = 0
    for it in range(1, max_iter + 1):
        y = adj @ x + d * x
        y -= y.mean()
        norm = np.linalg.norm(y)
        if norm == 0.0:
            rayleigh = 0.0
            break
        new_rayleigh = float(x @ y)
        x = y / norm
        if abs(new_rayleigh - rayleigh) < tol:
            rayleigh = new_rayleigh
            break
        rayleigh = new_rayleigh
    lambda_2 = rayleigh - d
    logger.debug(f"Power iteration: lambda_2={lambda_2:.10g} after {it} iterations")
    return {'lambda_2': lambda_2, 'certificate': (d - lambda_2) / 2.0, 'iterations': it}

# --- END OF FILE: analysis/graphgen.py ---
