# --- Start of File: analysis/sampler.py ---
"""
Swendsen-Wang dynamics on ghost-augmented graphs and the estimators the
graph experiments report.

One sweep alternates the two Edwards-Sokal conditionals: open every edge
with agreeing endpoints independently (p_edge on base edges, p_ghost on
ghost edges against color 1), then recolor every open cluster uniformly,
the ghost cluster always getting color 1. Colors are 0-based internally, so
external color 1 is 0.

Each chain owns its RNG, derived from a numpy SeedSequence. Tie-breaks for
the dominant color and uniform cluster recolorings use their own
independent streams of the same seed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import diptest
import numpy as np
from scipy import sparse
from scipy.integrate import trapezoid
from scipy.sparse.csgraph import connected_components
from scipy.stats import kurtosis, skew

from analysis.core import (BondConfig, GhostGraph, NeighborhoodLaw, Params, SpinConfig, check_cap, component_labels,
                           encode_pattern, tree_index)
from analysis.graphgen import adjacency_matrix, ball, ball_order, ball_orders, tree_like_mask
from config import Config

logger = logging.getLogger(__name__)


def _as_ghost(graph):
    return graph if isinstance(graph, GhostGraph) else GhostGraph(graph)


def _colors_of(spins):
    return spins.colors if isinstance(spins, SpinConfig) else np.asarray(spins)


def _base_colors(spins):
    return spins.base_colors() if isinstance(spins, SpinConfig) else np.asarray(spins)


# =============================================================================
# === Seeding ===
# =============================================================================

def seed_sequence(seed):
    """
    Fresh SeedSequence for an int, a {'entropy', 'spawn_key'} dict or an
    existing SeedSequence (copied, so spawning never mutates the caller's).
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    if isinstance(seed, dict):
        return np.random.SeedSequence(int(seed['entropy']), spawn_key=tuple(seed.get('spawn_key', ())))
    return np.random.SeedSequence(int(seed))


def chain_streams(seed):
    """ (chain_rng, tie_break_rng, coloring_rng): children 0, 1 and 2 of the seed. """
    chain_seq, tie_seq, coloring_seq = seed_sequence(seed).spawn(3)
    return np.random.default_rng(chain_seq), np.random.default_rng(tie_seq), np.random.default_rng(coloring_seq)


def chain_rng(seed):
    """ Child 0 of the seed alone, the stream the chain sweeps with. """
    return np.random.default_rng(seed_sequence(seed).spawn(1)[0])


# =============================================================================
# === Edwards-Sokal Conditionals ===
# =============================================================================

def edge_open_probabilities(gg, colors, params):
    """
    Conditional open probability of every GhostGraph edge given the colors.

    Args:
        gg (GhostGraph): Graph with ghost.
        colors (np.ndarray): (..., n + 1) colors, ghost last and equal to 0.
        params (Params): Model parameters.

    Returns:
        np.ndarray: (..., n_edges) probabilities p_e * 1(endpoints agree).
    """
    colors = np.asarray(colors)
    eu, ev = gg.endpoints
    p = np.concatenate([np.full(gg.n_base_edges, params.p_edge), np.full(gg.n, params.p_ghost)])
    agree = colors[..., eu] == colors[..., ev]
    return agree * p


def bonds_given_spins(spins, gg, params, rng):
    colors = _colors_of(spins)
    if colors.shape[-1] != gg.n_vertices:
        raise ValueError(f"Expected {gg.n_vertices} colors (ghost included), got {colors.shape[-1]}")
    p = edge_open_probabilities(gg, colors, params)
    return BondConfig(rng.random(p.shape) < p, gg.n_base_edges)


def _cluster_labels(open_bits, gg):
    eu, ev = gg.endpoints
    adj = sparse.coo_matrix((np.ones(int(open_bits.sum()), dtype=np.int8), (eu[open_bits], ev[open_bits])),
                            shape=(gg.n_vertices, gg.n_vertices))
    return connected_components(adj, directed=False)


def spins_given_bonds(bonds, gg, params, rng):
    """ Uniform color per open cluster; the ghost's cluster gets color 0. """
    n_comp, labels = _cluster_labels(np.asarray(bonds.open, dtype=bool), gg)
    cluster_colors = rng.integers(params.q, size=n_comp, dtype=np.int8)
    cluster_colors[labels[gg.ghost]] = 0
    return SpinConfig(cluster_colors[labels], ghosted=True)


def sw_sweep(spins, gg, params, rng):
    bonds = bonds_given_spins(spins, gg, params, rng)
    return spins_given_bonds(bonds, gg, params, rng), bonds


# =============================================================================
# === Chains ===
# =============================================================================

@dataclass(frozen=True, eq=False)
class ChainState:
    """ One snapshot: the spins, the bonds they were drawn from, the RNG state and the sweep count. """
    spins: SpinConfig
    bonds: BondConfig
    step: int
    rng_state: dict = field(default=None, repr=False)


def initial_spins(gg, params, rng, initial='random'):
    if initial == 'random':
        colors = rng.integers(params.q, size=gg.n_vertices, dtype=np.int8)
    elif initial == 'ordered':
        colors = np.zeros(gg.n_vertices, dtype=np.int8)
    else:
        raise ValueError(f"initial must be 'random' or 'ordered', got {initial!r}")
    colors[gg.ghost] = 0
    return SpinConfig(colors, ghosted=True)


def run_chain(graph, params, burn_in=None, n_samples=None, thin=None, seed=0, initial='random'):
    """
    Swendsen-Wang chain yielding a snapshot every `thin` sweeps after
    `burn_in` sweeps.

    Args:
        graph (Graph | GhostGraph): Base graph (a ghost is added if missing).
        params (Params): Model parameters.
        burn_in, n_samples, thin (int): Chain budget; Config defaults when None.
        seed: int, seed dict or SeedSequence. The same seed gives the same stream.
        initial (str): 'random' (iid uniform) or 'ordered' (all color 1).

    Yields:
        ChainState: Snapshots in chain order.
    """
    gg = _as_ghost(graph)
    burn_in = Config.BURN_IN if burn_in is None else int(burn_in)
    n_samples = Config.N_SAMPLES if n_samples is None else int(n_samples)
    thin = Config.THIN if thin is None else int(thin)
    if burn_in < 0 or n_samples < 1 or thin < 1:
        raise ValueError(f"Invalid chain budget burn_in={burn_in}, n_samples={n_samples}, thin={thin}")

    rng = chain_rng(seed)
    spins = initial_spins(gg, params, rng, initial)
    logger.debug(f"Chain start: n={gg.n}, {params}, burn_in={burn_in}, samples={n_samples}, thin={thin}")
    step = 0
    for _ in range(burn_in):
        spins, bonds = sw_sweep(spins, gg, params, rng)
        step += 1
    for _ in range(n_samples):
        for _ in range(thin):
            spins, bonds = sw_sweep(spins, gg, params, rng)
            step += 1
        yield ChainState(spins, bonds, step, rng.bit_generator.state)


# =============================================================================
# === Estimator Reports ===
# =============================================================================

@dataclass(frozen=True)
class EstimatorReport:
    name: str
    mean: float
    stderr: float
    n_samples: int
    n_batches: int

    @classmethod
    def from_values(cls, name, values, n_batches=None):
        """
        Batch-means summary. With fewer samples than batches the naive
        standard error is used and a warning is logged.
        """
        values = np.asarray(values, dtype=float)
        n_batches = Config.N_BATCHES if n_batches is None else int(n_batches)
        n = values.size
        if n == 0:
            raise ValueError(f"Estimator {name} needs at least one sample")
        mean = float(values.mean())
        if n >= n_batches >= 2:
            size = n // n_batches
            means = values[:size * n_batches].reshape(n_batches, size).mean(axis=1)
            stderr = float(means.std(ddof=1) / math.sqrt(n_batches))
            used = n_batches
        elif n >= 2:
            logger.warning(f"Estimator {name}: {n} samples < {n_batches} batches, using the naive standard error")
            stderr = float(values.std(ddof=1) / math.sqrt(n))
            used = n
        else:
            stderr, used = float('nan'), 1
        return cls(name, mean, stderr, n, used)

    def within(self, target, n_se=3.0):
        return abs(self.mean - target) <= n_se * self.stderr

    def to_dict(self):
        return {'name': self.name, 'mean': self.mean, 'stderr': self.stderr,
                'n_samples': self.n_samples, 'n_batches': self.n_batches}

    @classmethod
    def from_dict(cls, raw):
        return cls(raw['name'], float(raw['mean']), float(raw['stderr']), int(raw['n_samples']),
                   int(raw['n_batches']))


def merge_reports(reports):
    """ Combines independent chains' reports for one estimator, sample-weighted. """
    reports = list(reports)
    if not reports:
        raise ValueError("Nothing to merge")
    total = sum(r.n_samples for r in reports)
    mean = sum(r.mean * r.n_samples for r in reports) / total
    stderr = math.sqrt(sum((r.stderr * r.n_samples) ** 2 for r in reports)) / total
    return EstimatorReport(reports[0].name, mean, stderr, total, sum(r.n_batches for r in reports))


# =============================================================================
# === Estimators ===
# =============================================================================

def _stack_colors(snapshots):
    return np.stack([s.spins.colors for s in snapshots])


def _require(snapshots):
    snapshots = list(snapshots)
    if not snapshots:
        raise ValueError("Estimators need at least one snapshot")
    return snapshots


def internal_energy(snapshots, graph):
    """ (1/n) sum over base edges of 1(sigma_i = sigma_j), per snapshot. """
    snapshots = _require(snapshots)
    gg = _as_ghost(graph)
    colors = _stack_colors(snapshots)
    e = gg.base.edges
    agree = (colors[:, e[:, 0]] == colors[:, e[:, 1]]).sum(axis=1)
    return EstimatorReport.from_values('internal_energy', agree / gg.n)


def edge_agreement(snapshots, graph):
    snapshots = _require(snapshots)
    gg = _as_ghost(graph)
    colors = _stack_colors(snapshots)
    e = gg.base.edges
    return EstimatorReport.from_values('edge_agreement', (colors[:, e[:, 0]] == colors[:, e[:, 1]]).mean(axis=1))


def magnetization(snapshots, graph):
    """ Color-1 density. """
    snapshots = _require(snapshots)
    gg = _as_ghost(graph)
    colors = _stack_colors(snapshots)[:, :gg.n]
    return EstimatorReport.from_values('magnetization', (colors == 0).mean(axis=1))


def _snapshot_labels(snapshot, gg):
    return _cluster_labels(np.asarray(snapshot.bonds.open, dtype=bool), gg)[1]


def ghost_connectivity(snapshots, graph):
    """ Fraction of base vertices in the ghost's cluster. """
    snapshots = _require(snapshots)
    gg = _as_ghost(graph)
    values = []
    for s in snapshots:
        labels = _snapshot_labels(s, gg)
        values.append(np.mean(labels[:gg.n] == labels[gg.ghost]))
    return EstimatorReport.from_values('ghost_connectivity', values)


def edge_connectivity(snapshots, graph):
    """ Fraction of base edges whose endpoints share an open cluster. """
    snapshots = _require(snapshots)
    gg = _as_ghost(graph)
    e = gg.base.edges
    values = []
    for s in snapshots:
        labels = _snapshot_labels(s, gg)
        values.append(np.mean(labels[e[:, 0]] == labels[e[:, 1]]))
    return EstimatorReport.from_values('edge_connectivity', values)


def site_marginal(snapshots, v, q):
    """ One report per color for the law of sigma_v. """
    snapshots = _require(snapshots)
    col = _stack_colors(snapshots)[:, int(v)]
    return [EstimatorReport.from_values(f'site_{v}_color_{k + 1}', col == k) for k in range(q)]


ESTIMATORS = {
    'internal_energy': internal_energy,
    'edge_agreement': edge_agreement,
    'magnetization': magnetization,
    'ghost_connectivity': ghost_connectivity,
    'edge_connectivity': edge_connectivity,
}


def estimate(names, snapshots, graph):
    unknown = [n for n in names if n not in ESTIMATORS]
    if unknown:
        raise ValueError(f"Unknown estimators {unknown}; choose from {sorted(ESTIMATORS)}")
    return {name: ESTIMATORS[name](snapshots, graph) for name in names}


# =============================================================================
# === Chain Jobs ===
# =============================================================================

@dataclass(frozen=True)
class ChainJob:
    """ JSON-serialisable description of one chain at one parameter point. """
    index: int
    params: dict
    burn_in: int
    n_samples: int
    thin: int
    entropy: int
    spawn_key: tuple = ()
    estimators: tuple = ('internal_energy',)
    initial: str = 'random'

    @property
    def seed(self):
        return {'entropy': self.entropy, 'spawn_key': list(self.spawn_key)}

    def to_dict(self):
        return {'index': self.index, 'params': dict(self.params), 'burn_in': self.burn_in,
                'n_samples': self.n_samples, 'thin': self.thin, 'entropy': self.entropy,
                'spawn_key': list(self.spawn_key), 'estimators': list(self.estimators),
                'initial': self.initial}

    @classmethod
    def from_dict(cls, raw):
        return cls(int(raw['index']), dict(raw['params']), int(raw['burn_in']), int(raw['n_samples']),
                   int(raw['thin']), int(raw['entropy']), tuple(int(k) for k in raw.get('spawn_key', ())),
                   tuple(raw.get('estimators', ('internal_energy',))), raw.get('initial', 'random'))


def make_jobs(params_list, master_seed, burn_in=None, n_samples=None, thin=None,
              estimators=('internal_energy',), initial='random'):
    """ One job per parameter point, seeded by spawning from the master seed. """
    params_list = list(params_list)
    children = np.random.SeedSequence(int(master_seed)).spawn(len(params_list))
    jobs = []
    for i, (p, child) in enumerate(zip(params_list, children)):
        inits = initial[i] if isinstance(initial, (list, tuple)) else initial
        jobs.append(ChainJob(
            index=i,
            params=p.to_dict() if isinstance(p, Params) else dict(p),
            burn_in=Config.BURN_IN if burn_in is None else int(burn_in),
            n_samples=Config.N_SAMPLES if n_samples is None else int(n_samples),
            thin=Config.THIN if thin is None else int(thin),
            entropy=int(child.entropy),
            spawn_key=tuple(int(k) for k in child.spawn_key),
            estimators=tuple(estimators),
            initial=inits,
        ))
    return jobs


def run_job(graph, job):
    """
    Runs one ChainJob and returns a JSON-ready dict with its estimator
    reports.
    """
    params = Params(**job.params)
    snapshots = list(run_chain(graph, params, job.burn_in, job.n_samples, job.thin, job.seed, job.initial))
    reports = estimate(job.estimators, snapshots, graph)
    return {'index': job.index, 'params': params.to_dict(), 'seed': job.seed,
            'reports': {name: r.to_dict() for name, r in reports.items()}}


def sequential_runner(graph):
    """ Runner that executes jobs one after another in index order. """
    def runner(jobs):
        return [run_job(graph, job) for job in sorted(jobs, key=lambda j: j.index)]
    return runner


# =============================================================================
# === Free Energy by Thermodynamic Integration ===
# =============================================================================

@dataclass(frozen=True)
class FreeEnergyEstimate:
    value: float
    mc_stderr: float
    quadrature_error: float
    grid: np.ndarray = field(repr=False)
    integrand: np.ndarray = field(repr=False)
    integrand_stderr: np.ndarray = field(repr=False)

    @property
    def error(self):
        return math.hypot(self.mc_stderr, self.quadrature_error)

    def to_dict(self):
        return {'value': self.value, 'mc_stderr': self.mc_stderr, 'quadrature_error': self.quadrature_error,
                'error': self.error, 'grid': self.grid.tolist(), 'integrand': self.integrand.tolist(),
                'integrand_stderr': self.integrand_stderr.tolist()}


def ti_grid(stop, n_points=41, refine_at=None, width=0.1, n_refine=40):
    """
    Integration grid on [0, stop], with `n_refine` extra points within
    `width` of each coupling in `refine_at`.
    """
    grid = [np.linspace(0.0, stop, n_points)]
    for center in refine_at or ():
        lo, hi = max(0.0, center - width), min(stop, center + width)
        if lo < hi:
            grid.append(np.linspace(lo, hi, n_refine))
    return np.unique(np.concatenate(grid))


def _trapezoid_with_errors(x, y, se):
    value = float(trapezoid(y, x))
    weights = np.zeros_like(x)
    dx = np.diff(x)
    weights[:-1] += dx / 2.0
    weights[1:] += dx / 2.0
    mc = float(math.sqrt(np.sum((weights * se) ** 2)))
    # Richardson estimate against the grid with every other point
    quad = abs(value - float(trapezoid(y[::2], x[::2]))) / 3.0 if x.size >= 3 else 0.0
    return value, mc, quad


def _zero_coupling_agreement(graph, params):
    """ Exact internal energy at beta = 0, where spins are iid. """
    gg = _as_ghost(graph)
    w = np.ones(params.q)
    w[0] = math.exp(params.B)
    w /= w.sum()
    return gg.n_base_edges / gg.n * float(np.sum(w ** 2))


def _integrand(graph, params_list, estimator, runner, master_seed, burn_in, n_samples, thin, initial):
    runner = runner or sequential_runner(graph)
    starts = [initial(p) if callable(initial) else initial for p in params_list]
    jobs = make_jobs(params_list, master_seed, burn_in, n_samples, thin, estimators=(estimator,), initial=starts)
    results = sorted(runner(jobs), key=lambda r: r['index'])
    reports = [EstimatorReport.from_dict(r['reports'][estimator]) for r in results]
    return np.array([r.mean for r in reports]), np.array([r.stderr for r in reports])


def _check_grid(grid, stop, name):
    if grid.size < 2 or grid[0] != 0.0 or not np.isclose(grid[-1], stop) or np.any(np.diff(grid) <= 0):
        raise ValueError(f"{name} must increase from 0 to {stop}")


def free_energy_ti(graph, params, beta_grid=None, runner=None, master_seed=0, burn_in=None, n_samples=None,
                   thin=None, initial='random'):
    """
    Phi_n(beta, B) = log(e^B + q - 1) + int_0^beta u(b) db, with u the
    internal energy per vertex, integrated by the trapezoid rule.

    Args:
        graph (Graph | GhostGraph): Base graph.
        params (Params): Target point; B is held fixed along the path.
        beta_grid (array): Increasing grid from 0 to params.beta.
        runner (callable): jobs -> result dicts; sequential when None.
        initial (str | callable): Chain start, or a Params -> start function
            so grid points past a transition can start ordered.

    Returns:
        FreeEnergyEstimate: Value with Monte-Carlo and quadrature errors.
    """
    grid = ti_grid(params.beta) if beta_grid is None else np.asarray(beta_grid, dtype=float)
    _check_grid(grid, params.beta, 'beta_grid')
    start = math.log(math.exp(params.B) + params.q - 1)
    logger.info(f"Thermodynamic integration over beta: {params}, {grid.size} grid points")
    y = np.empty(grid.size)
    se = np.zeros(grid.size)
    y[0] = _zero_coupling_agreement(graph, params)
    y[1:], se[1:] = _integrand(graph, [params.replace(beta=float(b)) for b in grid[1:]], 'internal_energy',
                               runner, master_seed, burn_in, n_samples, thin, initial)
    value, mc, quad = _trapezoid_with_errors(grid, y, se)
    return FreeEnergyEstimate(start + value, mc, quad, grid, y, se)


def free_energy_field_path(graph, params, beta_grid=None, B_grid=None, runner=None, master_seed=0, burn_in=None,
                           n_samples=None, thin=None, initial='random'):
    """
    The other integration path: beta from 0 at B = 0, then B from 0 at the
    target beta, integrating the color-1 density.
    """
    zero_field = params.replace(B=0.0)
    leg_beta = free_energy_ti(graph, zero_field, beta_grid, runner, master_seed, burn_in, n_samples, thin, initial)
    if params.B == 0.0:
        return leg_beta
    grid = ti_grid(params.B, n_points=21) if B_grid is None else np.asarray(B_grid, dtype=float)
    _check_grid(grid, params.B, 'B_grid')
    logger.info(f"Thermodynamic integration over B: {params}, {grid.size} grid points")
    y, se = _integrand(graph, [params.replace(B=float(b)) for b in grid], 'magnetization', runner,
                       master_seed + 1, burn_in, n_samples, thin, initial)
    value, mc, quad = _trapezoid_with_errors(grid, y, se)
    return FreeEnergyEstimate(leg_beta.value + value, math.hypot(leg_beta.mc_stderr, mc),
                              math.hypot(leg_beta.quadrature_error, quad),
                              np.concatenate([leg_beta.grid, grid]), np.concatenate([leg_beta.integrand, y]),
                              np.concatenate([leg_beta.integrand_stderr, se]))


# =============================================================================
# === Neighborhood Laws ===
# =============================================================================

def neighborhood_law_estimate(graph, snapshots, t, q, d=None, orders=None, mask=None):
    """
    Empirical law of the spin pattern on B_v(t) over roots v whose B_v(2t)
    is a tree, averaged over roots and snapshots.

    `orders` (ball_orders at radius t) and `mask` (tree_like_mask at 2t)
    may be passed in when the same graph is reused.
    """
    G = graph.base if isinstance(graph, GhostGraph) else graph
    d = int(G.degrees().max(initial=0)) if d is None else d
    index = tree_index(d, t)
    check_cap(q ** index.n_vertices, Config.NEIGHBORHOOD_TABLE_CAP, f"empirical law on T_{d}({t})")
    snapshots = _require(snapshots)
    orders = ball_orders(G, t, d) if orders is None else orders
    mask = tree_like_mask(G, 2 * t, d) if mask is None else mask
    roots = np.flatnonzero(mask & (orders[:, 0] >= 0))
    if roots.size == 0:
        raise ValueError(f"No vertex has a tree-like ball of radius {2 * t}")
    counts = np.zeros(q ** index.n_vertices, dtype=np.int64)
    idx = orders[roots]
    for s in snapshots:
        codes = encode_pattern(s.spins.colors[idx], index, q)
        counts += np.bincount(codes, minlength=counts.size)
    logger.debug(f"Empirical law on T_{d}({t}): {roots.size} roots x {len(snapshots)} snapshots")
    return NeighborhoodLaw(d, t, q, counts / counts.sum())


# =============================================================================
# === Dominant Colors ===
# =============================================================================

def color_counts(colors, q):
    """ Per-color counts along the last axis: (..., n) -> (..., q). """
    colors = np.asarray(colors)
    if colors.ndim == 1:
        return np.bincount(colors.astype(np.int64), minlength=q)
    return (colors[..., None] == np.arange(q)).sum(axis=-2)


def transpose_colors(colors, a, b):
    """ Swaps colors a and b. """
    colors = np.asarray(colors)
    out = colors.copy()
    out[colors == a] = b
    out[colors == b] = a
    return out


def dominant_color(spins, q, rng):
    """ Most frequent base color, ties broken uniformly with `rng`. """
    counts = color_counts(_base_colors(spins), q)
    top = np.flatnonzero(counts == counts.max())
    return int(top[0]) if top.size == 1 else int(rng.choice(top))


def condition_on_dominant(spins, k, params, rng):
    """
    Maps a sample of mu_n to one of mu_{n,k} by swapping the dominant color
    with k. Exact only at B = 0.
    """
    if params.B != 0.0:
        raise ValueError(f"Conditioning on the dominant color requires B = 0, got B={params.B}")
    if not 0 <= k < params.q:
        raise ValueError(f"Color {k} outside [0, {params.q})")
    K = dominant_color(spins, params.q, rng)
    if isinstance(spins, SpinConfig):
        colors = spins.colors.copy()
        n = colors.size - 1 if spins.ghosted else colors.size
        colors[:n] = transpose_colors(colors[:n], K, k)
        return SpinConfig(colors, ghosted=spins.ghosted)
    return SpinConfig(transpose_colors(np.asarray(spins), K, k))


@dataclass(frozen=True)
class LocalDominant:
    color: int
    n1: float
    n2: float


def _argmax_uniform(values, rng):
    top = values == values.max(axis=-1, keepdims=True)
    keys = np.where(top, rng.random(values.shape), -1.0)
    return keys.argmax(axis=-1)


def local_dominant(graph, spins, v, ell, q, rng, d=None, iso=None):
    """
    K_ell(v) with N^(1), N^(2) at v: colors are counted over B_v(ell), each
    vertex u weighted by 1(B_u(2 ell) is a tree) and normalized by |B_v(ell)|.

    `iso` is the tree_like_mask at radius 2 ell; only the ball's vertices are
    tested when it is omitted.
    """
    if ell < 1:
        raise ValueError(f"ell must be >= 1, got {ell}")
    G = graph.base if isinstance(graph, GhostGraph) else graph
    d = int(G.degrees().max(initial=0)) if d is None else d
    colors = _base_colors(spins)
    verts = ball(G, int(v), ell, d).vertices
    if iso is None:
        weights = np.array([ball_order(G, int(u), 2 * ell, d) is not None for u in verts], dtype=bool)
    else:
        weights = np.asarray(iso, dtype=bool)[verts]
    N = np.bincount(colors[verts][weights].astype(np.int64), minlength=q) / verts.size
    K = int(_argmax_uniform(N, rng))
    return LocalDominant(K, float(N.max()), float(np.delete(N, K).max()))


def reach_matrix(graph, ell):
    """ Sparse 0/1 matrix with entry (u, v) set iff dist(u, v) <= ell. """
    G = graph.base if isinstance(graph, GhostGraph) else graph
    step = (adjacency_matrix(G) + sparse.identity(G.n, format='csr')).tocsr()
    reach = sparse.identity(G.n, format='csr')
    for _ in range(ell):
        reach = reach @ step
        reach.data[:] = 1.0
    return reach


def local_dominant_all(graph, spins, ell, q, rng, d=None, iso=None, reach=None):
    """
    K_ell(u) for every vertex at once. Returns (colors, N) with N of shape
    (n, q). `iso` (tree_like_mask at 2 ell) and `reach` (reach_matrix at
    ell) can be precomputed once per graph.
    """
    if ell < 1:
        raise ValueError(f"ell must be >= 1, got {ell}")
    G = graph.base if isinstance(graph, GhostGraph) else graph
    d = int(G.degrees().max(initial=0)) if d is None else d
    iso = tree_like_mask(G, 2 * ell, d) if iso is None else np.asarray(iso, dtype=bool)
    reach = reach_matrix(G, ell) if reach is None else reach
    colors = _base_colors(spins).astype(np.int64)
    sizes = np.asarray(reach.sum(axis=1)).ravel()
    weighted = np.zeros((G.n, q))
    weighted[np.arange(G.n), colors] = iso
    counts = np.asarray(reach @ weighted)
    N = counts / sizes[:, None]
    return _argmax_uniform(N, rng), N


# =============================================================================
# === Cluster Statistics ===
# =============================================================================

@dataclass(frozen=True)
class ClusterHistogram:
    """ counts[r] = number of non-ghost open clusters with r vertices. """
    counts: np.ndarray
    ghost_cluster_size: int

    @property
    def n(self):
        return int(np.dot(np.arange(self.counts.size), self.counts)) + self.ghost_cluster_size

    def mass_at_least(self, r):
        """ Fraction of base vertices in non-ghost clusters of size >= r. """
        sizes = np.arange(self.counts.size)
        return float(np.dot(sizes[r:], self.counts[r:])) / self.n


def cluster_histogram(bonds, graph):
    gg = _as_ghost(graph)
    eu, ev = gg.endpoints
    labels = component_labels(np.asarray(bonds.open, dtype=bool)[None, :], eu, ev, gg.n_vertices)[0]
    sizes = np.bincount(labels[:gg.n], minlength=gg.n_vertices)
    ghost_label = labels[gg.ghost]
    ghost_size = int(sizes[ghost_label])
    sizes[ghost_label] = 0
    counts = np.bincount(sizes[sizes > 0], minlength=gg.n + 1)
    return ClusterHistogram(counts, ghost_size)


def cluster_sizes(bonds, graph):
    """ Sizes of the non-ghost clusters, ordered by smallest member. """
    gg = _as_ghost(graph)
    eu, ev = gg.endpoints
    labels = component_labels(np.asarray(bonds.open, dtype=bool)[None, :], eu, ev, gg.n_vertices)[0]
    sizes = np.bincount(labels[:gg.n], minlength=gg.n_vertices)
    sizes[labels[gg.ghost]] = 0
    return sizes[sizes > 0]


@dataclass(frozen=True, eq=False)
class SimUnifColoring:
    """
    Colors of M clusters from the multinomial core/remainder split. Clusters
    in the core of class k get k; remainder class j gets gamma^{-1}(j), so
    only the remainder clusters depend on the permutation.
    """
    colors: np.ndarray
    remainder_class: np.ndarray
    gamma: np.ndarray
    exposed_sites: int

    @property
    def exposed(self):
        return self.remainder_class >= 0

    def recolor(self, gamma):
        gamma = np.asarray(gamma, dtype=np.int64)
        inverse = np.argsort(gamma)
        return np.where(self.exposed, inverse[np.clip(self.remainder_class, 0, None)], self.colors)


def sim_unif_colors(sizes, q, rng):
    """
    Args:
        sizes (array): Vertex counts of the M clusters to color.
        q (int): Number of colors.
        rng (np.random.Generator): Randomness for counts, partition and gamma.

    Returns:
        SimUnifColoring: Colors plus the permutation-exposed clusters and
        their total site count.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    M = sizes.size
    counts = rng.multinomial(M, np.full(q, 1.0 / q))
    m_star = int(counts.min())
    order = rng.permutation(M)
    remainder_class = np.full(M, -1, dtype=np.int64)
    core_colors = np.zeros(M, dtype=np.int64)
    pos = 0
    for k in range(q):
        core_colors[order[pos:pos + m_star]] = k
        pos += m_star
    for k in range(q):
        extra = int(counts[k]) - m_star
        remainder_class[order[pos:pos + extra]] = k
        pos += extra
    gamma = rng.permutation(q)
    inverse = np.argsort(gamma)
    colors = np.where(remainder_class >= 0, inverse[np.clip(remainder_class, 0, None)], core_colors)
    exposed = int(sizes[remainder_class >= 0].sum())
    return SimUnifColoring(colors, remainder_class, gamma, exposed)


# =============================================================================
# === Bimodality ===
# =============================================================================

def _mode_summary(values, prediction):
    n = int(values.size)
    if n == 0:
        return {'count': 0, 'mean': float('nan'), 'stderr': float('nan'), 'prediction': prediction,
                'matches': False}
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(n)) if n >= 2 else float('nan')
    matches = bool(np.isfinite(stderr) and abs(mean - prediction) <= 3.0 * max(stderr, 1e-12))
    return {'count': n, 'mean': mean, 'stderr': stderr, 'prediction': prediction, 'matches': matches}


def bimodality_report(values, free_prediction, wired_prediction, bins=30, alpha=0.05):
    """
    Histogram, Hartigan's dip test, Sarle's bimodality coefficient and a
    two-mode split at the midpoint of the free and wired predictions.

    `separated` needs the dip test to reject unimodality at level alpha and
    both modes to hold at least two values. `passed` adds both mode means
    within 3 SE of their predictions. The coefficient (above 5/9 suggests
    bimodality) is reported alongside.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 4:
        raise ValueError(f"Bimodality needs at least 4 values, got {n}")
    dip, dip_pvalue = diptest.diptest(values)
    g = float(skew(values, bias=False))
    k = float(kurtosis(values, bias=False))
    coefficient = (g ** 2 + 1.0) / (k + 3.0 * (n - 1) ** 2 / ((n - 2) * (n - 3)))
    hist, edges = np.histogram(values, bins=bins)
    threshold = 0.5 * (free_prediction + wired_prediction)
    if free_prediction <= wired_prediction:
        free_vals, wired_vals = values[values < threshold], values[values >= threshold]
    else:
        free_vals, wired_vals = values[values > threshold], values[values <= threshold]
    free_mode = _mode_summary(free_vals, free_prediction)
    wired_mode = _mode_summary(wired_vals, wired_prediction)
    separated = bool(free_mode['count'] >= 2 and wired_mode['count'] >= 2 and dip_pvalue < alpha)
    logger.debug(f"Dip {dip:.4g} (p={dip_pvalue:.3g}), coefficient {coefficient:.4g} over {n} values")
    return {
        'n_values': int(n),
        'histogram': hist.tolist(),
        'bin_edges': edges.tolist(),
        'dip': float(dip),
        'dip_pvalue': float(dip_pvalue),
        'bimodality_coefficient': float(coefficient),
        'threshold': threshold,
        'free_mode': free_mode,
        'wired_mode': wired_mode,
        'separated': separated,
        'passed': bool(separated and free_mode['matches'] and wired_mode['matches']),
    }

# --- END OF FILE: analysis/sampler.py ---
