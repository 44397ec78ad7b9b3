# --- Start of File: analysis/core.py ---
"""
Domain types shared by every layer: model parameters, symmetric single-site
measures, sparse graphs with the optional ghost vertex, spin/bond
configurations, canonical tree-ball indexing and pattern tables.

Colors are 0-based internally; internal color 0 is the field-favored color
(color 1 in all external I/O).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace as dc_replace
from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.special import expit

from config import Config

logger = logging.getLogger(__name__)


# =============================================================================
# === Exceptions ===
# =============================================================================

class PottsError(Exception):
    """Base class for errors raised by the analysis package."""


class CapExceededError(PottsError, ValueError):
    """A table or enumeration would exceed its configured size cap."""


class ConvergenceError(PottsError, RuntimeError):
    """An iterative scheme did not converge within its budget."""


class BracketError(PottsError, RuntimeError):
    """A root-finding bracket does not contain a sign change."""


class GraphGenerationError(PottsError, RuntimeError):
    """Random graph generation exhausted its retry budget."""


class SurgeryError(PottsError, ValueError):
    """Graph surgery would violate simplicity or parity requirements."""


def check_cap(size, cap, what):
    """ Raises CapExceededError when `size` exceeds `cap`. """
    if size > cap:
        raise CapExceededError(f"{what} needs {size} entries, above the cap of {cap}.")


# =============================================================================
# === Parameters and Symmetric Measures ===
# =============================================================================

@dataclass(frozen=True)
class Params:
    """ Model parameters (q, d, beta, B) with derived bond probabilities. """
    q: int
    d: int
    beta: float
    B: float

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 2:
            raise ValueError(f"q must be an integer >= 2, got {self.q}")
        if int(self.d) != self.d or self.d < 3:
            raise ValueError(f"d must be an integer >= 3, got {self.d}")
        if not (self.beta >= 0) or not math.isfinite(self.beta):
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")
        if not (self.B >= 0) or not math.isfinite(self.B):
            raise ValueError(f"B must be finite and >= 0, got {self.B}")
        object.__setattr__(self, 'q', int(self.q))
        object.__setattr__(self, 'd', int(self.d))
        object.__setattr__(self, 'beta', float(self.beta))
        object.__setattr__(self, 'B', float(self.B))

    @property
    def p_edge(self):
        return -math.expm1(-self.beta)

    @property
    def p_ghost(self):
        return -math.expm1(-self.B)

    @property
    def gamma(self):
        # (e^beta - 1)/(e^beta + q - 1), written in e^{-beta} to stay finite
        return -math.expm1(-self.beta) / (1.0 + (self.q - 1) * math.exp(-self.beta))

    def replace(self, **changes):
        return dc_replace(self, **changes)

    def to_dict(self):
        return {'q': self.q, 'd': self.d, 'beta': self.beta, 'B': self.B}


@dataclass(frozen=True)
class SymmetricMeasure:
    """
    Probability vector on [q] that is constant off color 1.

    Attributes:
        a (float): mass at color 1.
        q (int): number of colors.
    """
    a: float
    q: int

    def __post_init__(self):
        if self.q < 2:
            raise ValueError(f"q must be >= 2, got {self.q}")
        if not (0.0 <= self.a <= 1.0):
            raise ValueError(f"Mass at color 1 must lie in [0, 1], got {self.a}")

    @classmethod
    def uniform(cls, q):
        return cls(1.0 / q, q)

    @classmethod
    def delta_one(cls, q):
        return cls(1.0, q)

    @classmethod
    def from_r(cls, r, q):
        """ Inverse of the log-odds coordinate r = log((q-1)a/(1-a)). """
        if r == math.inf:
            return cls(1.0, q)
        if r == -math.inf:
            return cls(0.0, q)
        return cls(float(expit(r - math.log(q - 1))), q)

    @classmethod
    def from_b(cls, b, q):
        return cls(min(1.0, max(0.0, (1.0 + (q - 1) * b) / q)), q)

    @property
    def c(self):
        """ Mass at each color other than 1. """
        return (1.0 - self.a) / (self.q - 1)

    @property
    def r(self):
        if self.a >= 1.0:
            return math.inf
        if self.a <= 0.0:
            return -math.inf
        return math.log((self.q - 1) * self.a) - math.log1p(-self.a)

    @property
    def b(self):
        return (self.q * self.a - 1.0) / (self.q - 1)

    def as_vector(self):
        vec = np.full(self.q, self.c)
        vec[0] = self.a
        return vec

    def distance(self, other):
        """ Sup-norm distance between the two probability vectors. """
        return max(abs(self.a - other.a), abs(self.c - other.c))


# =============================================================================
# === Graphs ===
# =============================================================================

def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Graph:
    """
    Simple undirected graph with stable edge indices and CSR adjacency.

    Edge i is `edges[i]`, stored with the smaller endpoint first. `indptr` /
    `indices` give sorted neighbor lists, `edge_ids` the edge index of each
    adjacency slot.
    """
    n: int
    edges: np.ndarray
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    edge_ids: np.ndarray = field(repr=False)

    @classmethod
    def from_edges(cls, n, edges):
        n = int(n)
        if n < 0:
            raise ValueError(f"Vertex count must be >= 0, got {n}")
        arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ValueError(f"Edge endpoint outside [0, {n}).")
        if np.any(arr[:, 0] == arr[:, 1]):
            raise ValueError("Self-loops are not allowed.")
        arr = np.sort(arr, axis=1)
        keys = arr[:, 0] * max(n, 1) + arr[:, 1]
        if np.unique(keys).size != keys.size:
            raise ValueError("Parallel edges are not allowed.")

        m = arr.shape[0]
        heads = np.concatenate([arr[:, 0], arr[:, 1]])
        tails = np.concatenate([arr[:, 1], arr[:, 0]])
        ids = np.concatenate([np.arange(m), np.arange(m)])
        order = np.lexsort((tails, heads))
        counts = np.bincount(heads, minlength=n)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return cls(n, _frozen(arr), _frozen(indptr), _frozen(tails[order]), _frozen(ids[order]))

    @property
    def n_edges(self):
        return int(self.edges.shape[0])

    def neighbors(self, v):
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def incident_edges(self, v):
        return self.edge_ids[self.indptr[v]:self.indptr[v + 1]]

    def degrees(self):
        return np.diff(self.indptr)

    def degree(self, v):
        return int(self.indptr[v + 1] - self.indptr[v])

    def edge_list(self):
        return [(int(u), int(v)) for u, v in self.edges]

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.n_edges})"


@dataclass(frozen=True, eq=False)
class GhostGraph:
    """
    A base graph plus the ghost vertex v* (index n) joined to every base
    vertex. Ghost edge of vertex v has index base.n_edges + v.
    """
    base: Graph

    @property
    def n(self):
        return self.base.n

    @property
    def ghost(self):
        return self.base.n

    @property
    def n_vertices(self):
        return self.base.n + 1

    @property
    def n_base_edges(self):
        return self.base.n_edges

    @property
    def n_edges(self):
        return self.base.n_edges + self.base.n

    def ghost_edge(self, v):
        return self.base.n_edges + v

    @property
    def endpoints(self):
        """ (u, v) arrays over all edges, base edges first then ghost edges. """
        return _ghost_endpoints(self)


@lru_cache(maxsize=64)
def _ghost_endpoints(gg):
    n = gg.base.n
    eu = np.concatenate([gg.base.edges[:, 0], np.arange(n, dtype=np.int64)])
    ev = np.concatenate([gg.base.edges[:, 1], np.full(n, n, dtype=np.int64)])
    return _frozen(eu), _frozen(ev)


@dataclass(frozen=True, eq=False)
class SpinConfig:
    """ Vertex colors (0-based); when ghosted, the last entry is the ghost and is 0. """
    colors: np.ndarray
    ghosted: bool = False

    def __post_init__(self):
        if self.ghosted and self.colors.size and self.colors[-1] != 0:
            raise ValueError("Ghost vertex must carry color 1.")

    def base_colors(self):
        return self.colors[:-1] if self.ghosted else self.colors


@dataclass(frozen=True, eq=False)
class BondConfig:
    """ Open/closed bits indexed like the GhostGraph edge list. """
    open: np.ndarray
    n_base_edges: int

    def base(self):
        return self.open[:self.n_base_edges]

    def ghost(self):
        return self.open[self.n_base_edges:]


# =============================================================================
# === Tree-ball Indexing and Pattern Encoding ===
# =============================================================================

def tree_ball_size(d, t):
    """ |V(T_d(t))| = 1 + d((d-1)^t - 1)/(d-2). """
    if t == 0:
        return 1
    return 1 + d * ((d - 1) ** t - 1) // (d - 2)


@dataclass(frozen=True, eq=False)
class TreeIndex:
    """
    Canonical breadth-first ordering of T_d(t).

    Vertex 0 is the root with children 1..d; the children of every vertex are
    contiguous and appear in the order of their parents. Edge i joins
    `parent[i + 1]` and vertex i + 1, so edge indices follow BFS order too.
    BFS prefixes are balls: the first `tree_ball_size(d, s)` vertices form
    T_d(s) for every s <= t.
    """
    d: int
    t: int
    parent: np.ndarray
    depth: np.ndarray
    level_starts: tuple
    child_start: np.ndarray
    child_count: np.ndarray

    @property
    def n_vertices(self):
        return int(self.parent.shape[0])

    @property
    def n_edges(self):
        return self.n_vertices - 1

    @property
    def edges(self):
        child = np.arange(1, self.n_vertices)
        return np.stack([self.parent[1:], child], axis=1)

    def children(self, v):
        start = int(self.child_start[v])
        return np.arange(start, start + int(self.child_count[v]))

    def level(self, k):
        return np.arange(self.level_starts[k], self.level_starts[k + 1])

    def leaves(self):
        return self.level(self.t)

    def graph(self):
        return Graph.from_edges(self.n_vertices, self.edges)


@lru_cache(maxsize=32)
def tree_index(d, t, max_vertices=None):
    """
    Builds the canonical BFS index of T_d(t).

    Args:
        d (int): Degree (>= 3).
        t (int): Depth (>= 0).
        max_vertices (int | None): Size cap; defaults to the configured table cap.

    Returns:
        TreeIndex: Deterministic, cached per (d, t).
    """
    if d < 3:
        raise ValueError(f"d must be >= 3, got {d}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    cap = Config.NEIGHBORHOOD_TABLE_CAP if max_vertices is None else max_vertices
    size = tree_ball_size(d, t)
    check_cap(size, cap, f"T_{d}({t})")

    parent = np.full(size, -1, dtype=np.int64)
    depth = np.zeros(size, dtype=np.int64)
    child_start = np.full(size, size, dtype=np.int64)
    child_count = np.zeros(size, dtype=np.int64)
    level_starts = [0, 1]
    nxt = 1
    for k in range(t):
        for v in range(level_starts[k], level_starts[k + 1]):
            n_children = d if v == 0 else d - 1
            child_start[v] = nxt
            child_count[v] = n_children
            parent[nxt:nxt + n_children] = v
            depth[nxt:nxt + n_children] = k + 1
            nxt += n_children
        level_starts.append(nxt)

    return TreeIndex(d, t, _frozen(parent), _frozen(depth), tuple(level_starts),
                     _frozen(child_start), _frozen(child_count))


def encode_pattern(spins, index, q):
    """
    Base-q word of a spin pattern (0-based colors) in BFS order, root most
    significant. Accepts one pattern or a 2-D batch (one pattern per row).
    """
    arr = np.asarray(spins, dtype=np.int64)
    nv = index.n_vertices
    if arr.shape[-1] != nv:
        raise ValueError(f"Pattern length {arr.shape[-1]} does not match |T_d(t)| = {nv}")
    if arr.size and (arr.min() < 0 or arr.max() >= q):
        raise ValueError(f"Colors must lie in [0, {q}).")
    weights = q ** np.arange(nv - 1, -1, -1, dtype=np.int64)
    codes = arr @ weights
    return int(codes) if arr.ndim == 1 else codes


def decode_pattern(code, index, q):
    """ Inverse of encode_pattern for a scalar code or an array of codes. """
    nv = index.n_vertices
    codes = np.asarray(code, dtype=np.int64)
    if np.any(codes < 0) or np.any(codes >= q ** nv):
        raise ValueError(f"Pattern code outside [0, {q}^{nv}).")
    weights = q ** np.arange(nv - 1, -1, -1, dtype=np.int64)
    out = (codes[..., None] // weights) % q
    return out


def all_patterns(nv, q):
    """ Every pattern in code order as an (q^nv, nv) array. """
    codes = np.arange(q ** nv, dtype=np.int64)
    weights = q ** np.arange(nv - 1, -1, -1, dtype=np.int64)
    return (codes[:, None] // weights) % q


# =============================================================================
# === Neighborhood Laws ===
# =============================================================================

@dataclass(frozen=True, eq=False)
class NeighborhoodLaw:
    """ Probability table over spin patterns on T_d(t), indexed by pattern code. """
    d: int
    t: int
    q: int
    probs: np.ndarray
    normalized_tol: float = 1e-12

    def __post_init__(self):
        nv = tree_ball_size(self.d, self.t)
        check_cap(self.q ** nv, Config.NEIGHBORHOOD_TABLE_CAP, f"NeighborhoodLaw on T_{self.d}({self.t}), q={self.q}")
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (self.q ** nv,):
            raise ValueError(f"Table must have {self.q ** nv} entries, got shape {probs.shape}")
        total = probs.sum()
        if abs(total - 1.0) > self.normalized_tol:
            raise ValueError(f"Pattern probabilities sum to {total!r}, not 1.")
        object.__setattr__(self, 'probs', _frozen(probs))

    @property
    def index(self):
        return tree_index(self.d, self.t)

    @property
    def n_vertices(self):
        return tree_ball_size(self.d, self.t)

    def tv_distance(self, other):
        if (self.d, self.t, self.q) != (other.d, other.t, other.q):
            raise ValueError("Laws live on different balls or color sets.")
        return 0.5 * float(np.abs(self.probs - other.probs).sum())

    def marginal(self, t):
        """ Law of the pattern on T_d(t), t <= self.t (a BFS prefix). """
        if t > self.t or t < 0:
            raise ValueError(f"Cannot marginalize depth {self.t} law to depth {t}")
        nv_small = tree_ball_size(self.d, t)
        folded = self.probs.reshape(self.q ** nv_small, -1).sum(axis=1)
        return NeighborhoodLaw(self.d, t, self.q, folded / folded.sum())

    def root_marginal(self):
        return self.probs.reshape(self.q, -1).sum(axis=1)

    def permuted(self, perm):
        """ Law of the pattern after relabeling colors c -> perm[c]. """
        perm = np.asarray(perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(self.q)):
            raise ValueError(f"Not a permutation of {self.q} colors: {perm.tolist()}")
        inverse = np.argsort(perm)
        nv = self.n_vertices
        tensor = self.probs.reshape((self.q,) * nv)
        moved = tensor[np.ix_(*([inverse] * nv))]
        return NeighborhoodLaw(self.d, self.t, self.q, moved.reshape(-1))

    @classmethod
    def mixture(cls, laws, weights=None):
        laws = list(laws)
        if not laws:
            raise ValueError("Mixture of zero laws.")
        w = np.full(len(laws), 1.0 / len(laws)) if weights is None else np.asarray(weights, float)
        probs = sum(wi * law.probs for wi, law in zip(w, laws))
        first = laws[0]
        return cls(first.d, first.t, first.q, probs / probs.sum())


# =============================================================================
# === Cluster Bookkeeping ===
# =============================================================================

class DisjointSet:
    """ Union-find over 0..n-1 with path halving and union by size. """

    def __init__(self, n):
        self._parent = list(range(n))
        self._size = [1] * n

    def __len__(self):
        return len(self._parent)

    def find(self, x):
        parent = self._parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, x, y):
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return False
        if self._size[rx] < self._size[ry]:
            rx, ry = ry, rx
        self._parent[ry] = rx
        self._size[rx] += self._size[ry]
        return True

    def connected(self, x, y):
        return self.find(x) == self.find(y)

    def component_size(self, x):
        return self._size[self.find(x)]

    def n_components(self):
        return sum(1 for v in range(len(self._parent)) if self._parent[v] == v)

    def labels(self):
        return np.array([self.find(v) for v in range(len(self._parent))], dtype=np.int64)


def component_labels(open_mask, eu, ev, n_vertices):
    """
    Connected-component labels for a batch of bond configurations.

    The batch is laid out as one block-diagonal sparse graph, so a single
    csgraph pass labels every configuration.

    Args:
        open_mask (np.ndarray): (N, m) boolean, one configuration per row.
        eu, ev (np.ndarray): Edge endpoints, length m.
        n_vertices (int): Vertex count.

    Returns:
        np.ndarray: (N, n_vertices) labels; each vertex is labeled by the
        smallest vertex index in its component.
    """
    open_mask = np.atleast_2d(np.asarray(open_mask, dtype=bool))
    n_conf = open_mask.shape[0]
    total = n_conf * n_vertices
    if total == 0:
        return np.zeros((n_conf, n_vertices), dtype=np.int64)
    eu = np.asarray(eu, dtype=np.int64)
    ev = np.asarray(ev, dtype=np.int64)
    rows, cols = np.nonzero(open_mask)
    offset = rows * n_vertices
    adj = sparse.coo_matrix((np.ones(rows.size, dtype=np.int8), (offset + eu[cols], offset + ev[cols])),
                            shape=(total, total))
    _, comp = connected_components(adj, directed=False)
    # first occurrence of a component id is its smallest node
    _, smallest = np.unique(comp, return_index=True)
    labels = smallest[comp].reshape(n_conf, n_vertices).astype(np.int64)
    return labels - (np.arange(n_conf, dtype=np.int64) * n_vertices)[:, None]


def cluster_counts(open_mask, eu, ev, n_vertices):
    """ Number of components per configuration, isolated vertices included. """
    labels = component_labels(open_mask, eu, ev, n_vertices)
    return (labels == np.arange(n_vertices)).sum(axis=1)

# --- END OF FILE: analysis/core.py ---
