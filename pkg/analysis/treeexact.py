# --- Start of File: analysis/treeexact.py ---
"""
Exact Potts references on finite regular-tree balls T_d(t).

Boundary kinds:
  FREE               leaves carry only the field
  COLOR(k)           leaves pinned to color k
  FIXEDPOINT_FREE    each leaf receives the converged nu_free from below
  FIXEDPOINT_WIRED   each leaf receives nu_1 (color-1 wired state)
  FIXEDPOINT_COLOR(k) nu_1 with colors 1 and k swapped (B = 0 or k = 1)

Because every boundary is homogeneous across a level, upward messages depend
only on depth, so a depth-t ball costs O(t q) for marginals and
O(q^|T_d(t)|) for full pattern tables.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from analysis import bethe
from analysis.core import NeighborhoodLaw, check_cap, tree_ball_size, tree_index
from config import Config

logger = logging.getLogger(__name__)


class BoundaryKind(enum.Enum):
    FREE = 'FREE'
    COLOR = 'COLOR'
    FIXEDPOINT_FREE = 'FIXEDPOINT_FREE'
    FIXEDPOINT_WIRED = 'FIXEDPOINT_WIRED'
    FIXEDPOINT_COLOR = 'FIXEDPOINT_COLOR'


@dataclass(frozen=True)
class BoundarySpec:
    """ Boundary condition below the leaves of T_d(t); `k` is a 0-based color. """
    kind: BoundaryKind
    k: int = 0

    @classmethod
    def free(cls):
        return cls(BoundaryKind.FREE)

    @classmethod
    def color(cls, k):
        return cls(BoundaryKind.COLOR, int(k))

    @classmethod
    def fixed_point(cls, ddagger):
        if ddagger == 'free':
            return cls(BoundaryKind.FIXEDPOINT_FREE)
        if ddagger == 'wired':
            return cls(BoundaryKind.FIXEDPOINT_WIRED)
        raise ValueError(f"ddagger must be 'free' or 'wired', got {ddagger!r}")

    @classmethod
    def fixed_point_color(cls, k):
        return cls(BoundaryKind.FIXEDPOINT_COLOR, int(k))

    def validate(self, params):
        if self.kind in (BoundaryKind.COLOR, BoundaryKind.FIXEDPOINT_COLOR) and not 0 <= self.k < params.q:
            raise ValueError(f"Boundary color {self.k} outside [0, {params.q})")
        if self.kind is BoundaryKind.FIXEDPOINT_COLOR and self.k != 0 and params.B != 0.0:
            raise ValueError("FIXEDPOINT_COLOR(k) for k != 1 requires B = 0")

    def label(self):
        if self.kind in (BoundaryKind.COLOR, BoundaryKind.FIXEDPOINT_COLOR):
            return f"{self.kind.value}({self.k + 1})"
        return self.kind.value


def _swap(vec, k):
    out = np.array(vec, dtype=float)
    out[[0, k]] = out[[k, 0]]
    return out


def boundary_measure(boundary, params):
    """ The fixed-point measure attached below the leaves, or None for FREE/COLOR. """
    boundary.validate(params)
    if boundary.kind is BoundaryKind.FIXEDPOINT_FREE:
        return bethe.fixed_point_measure('free', params).as_vector()
    if boundary.kind is BoundaryKind.FIXEDPOINT_WIRED:
        return bethe.fixed_point_measure('wired', params).as_vector()
    if boundary.kind is BoundaryKind.FIXEDPOINT_COLOR:
        return _swap(bethe.fixed_point_measure('wired', params).as_vector(), boundary.k)
    return None


def field_log_weights(params):
    w = np.zeros(params.q)
    w[0] = params.B
    return w


def leaf_log_weights(boundary, params):
    """
    Log weight of a leaf's color. FREE/COLOR leaves carry the field (and the
    pin); fixed-point leaves carry nu itself, which already absorbs the
    field and the d-1 incoming messages.
    """
    nu = boundary_measure(boundary, params)
    if nu is not None:
        with np.errstate(divide='ignore'):
            return np.log(nu)
    w = field_log_weights(params)
    if boundary.kind is BoundaryKind.COLOR:
        pinned = np.full(params.q, -np.inf)
        pinned[boundary.k] = w[boundary.k]
        return pinned
    return w


def _kernel_log(log_h, beta):
    """ log of sum_tau e^{beta delta(sigma, tau)} h(tau) for every sigma. """
    total = logsumexp(log_h)
    with np.errstate(divide='ignore'):
        boost = log_h + math.log(math.expm1(beta)) if beta > 0 else np.full_like(log_h, -np.inf)
    return np.logaddexp(total, boost)


def _normalize_log(log_v):
    return log_v - logsumexp(log_v)


@dataclass(frozen=True)
class TreeMessages:
    """
    Upward cavity messages of T_d(t): `upward[k]` is the normalized law of a
    depth-k vertex's color under the measure on its own subtree, which is
    the message it sends to its parent. Index 0 is unused.
    """
    t: int
    upward: tuple

    def message(self, index, child):
        return self.upward[int(index.depth[child])]


def potts_tree_messages(t, boundary, params):
    """
    Leaf-to-root dynamic program on T_d(t).

    Args:
        t (int): Depth (>= 1).
        boundary (BoundarySpec): Boundary below the leaves.
        params (Params): Model parameters.

    Returns:
        TreeMessages: Per-depth upward messages (one per directed child->parent edge class).
    """
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    log_h = _normalize_log(leaf_log_weights(boundary, params))
    upward = [None] * (t + 1)
    upward[t] = np.exp(log_h)
    field = field_log_weights(params)
    for k in range(t - 1, 0, -1):
        log_h = _normalize_log(field + (params.d - 1) * _kernel_log(log_h, params.beta))
        upward[k] = np.exp(log_h)
    return TreeMessages(t, tuple(upward))


def _log_subtree(messages, k):
    with np.errstate(divide='ignore'):
        return np.log(messages.upward[k])


def root_marginal(t, boundary, params):
    """ Law of the root color on T_d(t) with the given boundary. """
    msgs = potts_tree_messages(t, boundary, params)
    log_root = field_log_weights(params) + params.d * _kernel_log(_log_subtree(msgs, 1), params.beta)
    return np.exp(_normalize_log(log_root))


def pair_marginal(t, boundary, params):
    """ q x q law of (root, first child) colors on T_d(t). """
    msgs = potts_tree_messages(t, boundary, params)
    log_child = _log_subtree(msgs, 1)
    log_root_side = field_log_weights(params) + (params.d - 1) * _kernel_log(log_child, params.beta)
    table = log_root_side[:, None] + log_child[None, :] + params.beta * np.eye(params.q)
    return np.exp(table - logsumexp(table))


def fixed_point_root_formula(ddagger, params):
    """ Root law proportional to nu(sigma) ((e^beta - 1) nu(sigma) + 1). """
    nu = bethe.fixed_point_measure(ddagger, params).as_vector()
    w = nu * (math.expm1(params.beta) * nu + 1.0)
    return w / w.sum()


def fixed_point_pair_formula(ddagger, params):
    """ Edge law proportional to e^{beta delta} nu(sigma_i) nu(sigma_j). """
    nu = bethe.fixed_point_measure(ddagger, params).as_vector()
    w = np.exp(params.beta * np.eye(params.q)) * np.outer(nu, nu)
    return w / w.sum()


# =============================================================================
# === Full Pattern Tables ===
# =============================================================================

def _pattern_log_weights(index, q, beta, inner_log_w, outer_log_w):
    """
    Unnormalized log weight of every pattern on the ball `index`: inner
    vertices use `inner_log_w`, vertices on the last level `outer_log_w`,
    plus beta per monochromatic edge.
    """
    nv = index.n_vertices
    codes = np.arange(q ** nv, dtype=np.int64)

    def column(v):
        return (codes // q ** (nv - 1 - v)) % q

    log_w = np.zeros(codes.size)
    last = index.level_starts[index.t]
    for v in range(nv):
        col = column(v)
        weights = outer_log_w if v >= last else inner_log_w
        log_w += weights[col]
        if v > 0:
            log_w += beta * (col == column(int(index.parent[v])))
    return log_w


def _single_law(t_report, t_total, boundary, params):
    q, d = params.q, params.d
    if t_report == 0:
        probs = root_marginal(t_total, boundary, params)
        return NeighborhoodLaw(d, 0, q, probs)
    if t_report == t_total:
        outer = leaf_log_weights(boundary, params)
    else:
        msgs = potts_tree_messages(t_total, boundary, params)
        outer = _log_subtree(msgs, t_report)
    index = tree_index(d, t_report)
    log_w = _pattern_log_weights(index, q, params.beta, field_log_weights(params), outer)
    probs = np.exp(log_w - logsumexp(log_w))
    return NeighborhoodLaw(d, t_report, q, probs / probs.sum())


def neighborhood_law(t_report, t_total, boundary, params):
    """
    Exact law of the spins on T_d(t_report) under the Potts measure on
    T_d(t_total) with the given boundary.

    FIXEDPOINT_WIRED at B = 0 returns the balanced mixture
    (1/q) sum_k FIXEDPOINT_COLOR(k), the wired limit law; at B > 0 the field
    selects color 1 and the law is the nu_1 one.
    """
    if not 0 <= t_report <= t_total:
        raise ValueError(f"Need 0 <= t_report <= t_total, got {t_report}, {t_total}")
    if t_total < 1:
        raise ValueError(f"t_total must be >= 1, got {t_total}")
    boundary.validate(params)
    nv = tree_ball_size(params.d, t_report)
    check_cap(params.q ** nv, Config.NEIGHBORHOOD_TABLE_CAP, f"neighborhood law on T_{params.d}({t_report})")
    if boundary.kind is BoundaryKind.FIXEDPOINT_WIRED and params.B == 0.0:
        laws = [_single_law(t_report, t_total, BoundarySpec.fixed_point_color(k), params) for k in range(params.q)]
        return NeighborhoodLaw.mixture(laws)
    return _single_law(t_report, t_total, boundary, params)


def wired_law(t_report, params, t_total=None):
    """ Reference law of the wired phase on T_d(t_report). """
    return neighborhood_law(t_report, t_total or max(t_report, 1), BoundarySpec.fixed_point('wired'), params)


# =============================================================================
# === RCM Connectivities via the Correlation Identity ===
# =============================================================================

def _connectivity_from_agreement(agree, q):
    return (agree - 1.0 / q) / (1.0 - 1.0 / q)


def rcm_edge_connectivity(t, ddagger, params):
    """
    Probability that the endpoints of each edge of T_d(t) are connected in
    the free/wired infinite-volume RCM, from the fixed-point pair law.
    The fixed-point measure is invariant along the tree, so every edge gets
    the same value.
    """
    boundary = BoundarySpec.fixed_point(ddagger)
    pair = pair_marginal(max(t, 1), boundary, params)
    phi = _connectivity_from_agreement(float(np.trace(pair)), params.q)
    return np.full(tree_ball_size(params.d, t) - 1, phi)


def ghost_connectivity(ddagger, params):
    """ P(o <-> v*) = (mu(sigma_o = 1) - 1/q)/(1 - 1/q). """
    root = fixed_point_root_formula(ddagger, params)
    return _connectivity_from_agreement(float(root[0]), params.q)

# --- END OF FILE: analysis/treeexact.py ---
