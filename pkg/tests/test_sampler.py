# --- Start of File: tests/test_sampler.py ---
import math

import numpy as np
import pytest
from scipy.stats import norm

from analysis import oracle, sampler, treeexact
from analysis.core import BondConfig, GhostGraph, Graph, Params, SpinConfig
from analysis.graphgen import GenSpec, random_regular, tree_ball_graph
from analysis.sampler import ChainJob, EstimatorReport


def _colors(snapshots):
    return np.stack([s.spins.colors for s in snapshots])


# =============================================================================
# === Chains and Conditionals ===
# =============================================================================

def test_chain_is_reproducible_per_seed(k4):
    params = Params(3, 3, 0.9, 0.1)
    a = list(sampler.run_chain(k4, params, burn_in=5, n_samples=10, thin=2, seed=3))
    b = list(sampler.run_chain(k4, params, burn_in=5, n_samples=10, thin=2, seed={'entropy': 3}))
    c = list(sampler.run_chain(k4, params, burn_in=5, n_samples=10, thin=2, seed=4))
    np.testing.assert_array_equal(_colors(a), _colors(b))
    assert not np.array_equal(_colors(a), _colors(c))
    assert [s.step for s in a] == list(range(7, 26, 2))
    assert all(s.spins.colors[-1] == 0 for s in a)


def test_seed_sequence_copies():
    seq = np.random.SeedSequence(11)
    copy = sampler.seed_sequence(seq)
    copy.spawn(3)
    assert seq.n_children_spawned == 0
    assert sampler.seed_sequence({'entropy': 5, 'spawn_key': [1]}).spawn_key == (1,)


def test_chain_streams_are_separate_children():
    chain, tie, coloring = sampler.chain_streams(5)
    draws = [g.integers(0, 2 ** 32, size=8) for g in (chain, tie, coloring)]
    assert len({tuple(x) for x in draws}) == 3
    np.testing.assert_array_equal(sampler.chain_rng(5).integers(0, 2 ** 32, size=8), draws[0])


def test_ghost_cluster_is_color_one(rng):
    gg = GhostGraph(Graph.from_edges(3, [(0, 1), (1, 2)]))
    bonds = BondConfig(np.array([False, False, True, True, True]), gg.n_base_edges)
    params = Params(4, 3, 1.0, 1.0)
    for _ in range(20):
        spins = sampler.spins_given_bonds(bonds, gg, params, rng)
        assert spins.colors.tolist() == [0, 0, 0, 0]


def test_bonds_open_only_between_agreeing_spins(rng, path3):
    gg = GhostGraph(path3)
    spins = SpinConfig(np.array([0, 1, 1, 0], dtype=np.int8), ghosted=True)
    probs = sampler.edge_open_probabilities(gg, spins.colors, Params(2, 3, 1.0, 0.5))
    assert probs[0] == 0.0
    assert probs[1] == pytest.approx(1 - math.exp(-1.0))
    assert probs[2] == pytest.approx(1 - math.exp(-0.5))
    assert probs[3] == probs[4] == 0.0
    for _ in range(20):
        bonds = sampler.bonds_given_spins(spins, gg, Params(2, 3, 5.0, 5.0), rng)
        assert not bonds.open[0] and not bonds.open[3] and not bonds.open[4]
    with pytest.raises(ValueError):
        sampler.bonds_given_spins(np.zeros(3, dtype=np.int8), gg, Params(2, 3, 1.0, 0.0), rng)


def test_chain_budget_and_start_validation(k4, rng):
    with pytest.raises(ValueError):
        list(sampler.run_chain(k4, Params(2, 3, 1.0, 0.0), burn_in=0, n_samples=0, thin=1))
    with pytest.raises(ValueError):
        sampler.initial_spins(GhostGraph(k4), Params(2, 3, 1.0, 0.0), rng, 'hot')
    ordered = sampler.initial_spins(GhostGraph(k4), Params(3, 3, 1.0, 0.0), rng, 'ordered')
    assert ordered.colors.tolist() == [0] * 5


# =============================================================================
# === Reports and Jobs ===
# =============================================================================

def test_batch_means_report():
    report = EstimatorReport.from_values('x', np.arange(40), n_batches=4)
    assert report.mean == pytest.approx(19.5)
    assert report.stderr == pytest.approx(np.std([4.5, 14.5, 24.5, 34.5], ddof=1) / 2)
    assert report.n_batches == 4
    assert report.within(19.5 + 2 * report.stderr)
    assert not report.within(19.5 + 4 * report.stderr)
    assert EstimatorReport.from_dict(report.to_dict()) == report


def test_report_with_few_samples():
    naive = EstimatorReport.from_values('x', [1.0, 3.0], n_batches=20)
    assert naive.stderr == pytest.approx(1.0)
    assert naive.n_batches == 2
    assert math.isnan(EstimatorReport.from_values('x', [1.0]).stderr)
    with pytest.raises(ValueError):
        EstimatorReport.from_values('x', [])


def test_merge_reports():
    merged = sampler.merge_reports([EstimatorReport('m', 1.0, 0.1, 10, 5), EstimatorReport('m', 3.0, 0.2, 30, 5)])
    assert merged.mean == pytest.approx(2.5)
    assert merged.stderr == pytest.approx(math.sqrt(37) / 40)
    assert merged.n_samples == 40 and merged.n_batches == 10
    with pytest.raises(ValueError):
        sampler.merge_reports([])


def test_make_jobs_spawns_distinct_streams():
    points = [Params(2, 3, b, 0.0) for b in (0.1, 0.2, 0.3)]
    jobs = sampler.make_jobs(points, 9, 10, 20, 1, initial=['random', 'ordered', 'random'])
    again = sampler.make_jobs(points, 9, 10, 20, 1, initial=['random', 'ordered', 'random'])
    assert jobs == again
    assert len({j.spawn_key for j in jobs}) == 3
    assert [j.initial for j in jobs] == ['random', 'ordered', 'random']
    assert ChainJob.from_dict(jobs[1].to_dict()) == jobs[1]
    assert jobs[2].params == {'q': 2, 'd': 3, 'beta': 0.3, 'B': 0.0}


def test_run_job_and_runner(k4):
    jobs = sampler.make_jobs([Params(2, 3, 0.5, 0.0), Params(2, 3, 0.0, 0.0)], 1, 5, 30, 1,
                             estimators=('internal_energy', 'magnetization'))
    results = sampler.sequential_runner(k4)(list(reversed(jobs)))
    assert [r['index'] for r in results] == [0, 1]
    assert set(results[0]['reports']) == {'internal_energy', 'magnetization'}
    assert results[1]['reports']['magnetization']['n_samples'] == 30


def test_estimators(k4):
    snaps = list(sampler.run_chain(k4, Params(3, 3, 1.2, 0.3), burn_in=10, n_samples=40, thin=1, seed=2))
    reports = sampler.estimate(list(sampler.ESTIMATORS), snaps, k4)
    # six edges over four vertices
    assert reports['internal_energy'].mean == pytest.approx(1.5 * reports['edge_agreement'].mean)
    for name in ('magnetization', 'ghost_connectivity', 'edge_connectivity', 'edge_agreement'):
        assert 0.0 <= reports[name].mean <= 1.0
    marginal = sampler.site_marginal(snaps, 0, 3)
    assert sum(r.mean for r in marginal) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        sampler.estimate(['entropy'], snaps, k4)
    with pytest.raises(ValueError):
        sampler.internal_energy([], k4)


# =============================================================================
# === Agreement with Exact Results ===
# =============================================================================

def test_root_marginal_on_finite_tree():
    params = Params(3, 3, 0.8, 0.2)
    tree = tree_ball_graph(3, 3)
    snaps = list(sampler.run_chain(tree, params, burn_in=200, n_samples=3000, thin=1, seed=17))
    exact = treeexact.root_marginal(3, treeexact.BoundarySpec.free(), params)
    for report, target in zip(sampler.site_marginal(snaps, 0, 3), exact):
        assert report.within(target, n_se=5.0)


def test_thermodynamic_integration_on_k4(k4):
    params = Params(2, 3, 0.8, 0.0)
    est = sampler.free_energy_ti(k4, params, beta_grid=np.linspace(0.0, 0.8, 9), master_seed=5,
                                 burn_in=100, n_samples=2000, thin=1)
    exact = oracle.enumerate_potts(k4, params).log_Z / 4
    assert est.value == pytest.approx(exact, abs=0.03)
    assert est.integrand[0] == pytest.approx(1.5 * 0.5)
    assert est.error >= est.mc_stderr
    assert set(est.to_dict()) >= {'value', 'error', 'grid'}


def test_free_energy_grid_validation(k4):
    with pytest.raises(ValueError):
        sampler.free_energy_ti(k4, Params(2, 3, 0.8, 0.0), beta_grid=[0.1, 0.8])
    with pytest.raises(ValueError):
        sampler.free_energy_ti(k4, Params(2, 3, 0.8, 0.0), beta_grid=[0.0, 0.5])


def test_ti_grid_refinement():
    np.testing.assert_allclose(sampler.ti_grid(1.0, 5), [0.0, 0.25, 0.5, 0.75, 1.0])
    refined = sampler.ti_grid(1.0, 5, refine_at=[0.3], width=0.1, n_refine=3)
    np.testing.assert_allclose(refined, [0.0, 0.2, 0.25, 0.3, 0.4, 0.5, 0.75, 1.0])


def test_field_path_without_field_is_the_beta_leg(k4):
    params = Params(2, 3, 0.4, 0.0)
    kwargs = dict(beta_grid=np.linspace(0.0, 0.4, 3), master_seed=2, burn_in=5, n_samples=20, thin=1)
    a = sampler.free_energy_field_path(k4, params, **kwargs)
    b = sampler.free_energy_ti(k4, params, **kwargs)
    assert a.value == b.value


def test_empirical_law_is_uniform_without_coupling():
    graph = random_regular(GenSpec(400, 3, seed=5))
    snaps = list(sampler.run_chain(graph, Params(2, 3, 0.0, 0.0), burn_in=0, n_samples=200, thin=1, seed=1))
    law = sampler.neighborhood_law_estimate(graph, snaps, 1, 2, d=3)
    uniform = np.full(16, 1 / 16)
    assert 0.5 * np.abs(law.probs - uniform).sum() < 0.05


# =============================================================================
# === Dominant Colors ===
# =============================================================================

def test_condition_on_dominant(rng):
    params = Params(3, 3, 1.0, 0.0)
    plain = sampler.condition_on_dominant(np.array([0, 1, 1, 2]), 0, params, rng)
    assert plain.colors.tolist() == [1, 0, 0, 2]
    ghosted = SpinConfig(np.array([0, 1, 1, 2, 0], dtype=np.int8), ghosted=True)
    moved = sampler.condition_on_dominant(ghosted, 2, params, rng)
    assert moved.colors.tolist() == [0, 2, 2, 1, 0]
    with pytest.raises(ValueError):
        sampler.condition_on_dominant(ghosted, 0, params.replace(B=0.1), rng)


def test_dominant_color_ties_use_rng():
    colors = np.array([0, 1])
    seen = {sampler.dominant_color(colors, 3, np.random.default_rng(s)) for s in range(30)}
    assert seen == {0, 1}
    assert sampler.transpose_colors(np.array([0, 1, 2]), 0, 2).tolist() == [2, 1, 0]
    assert sampler.color_counts(np.array([[0, 0, 2], [1, 1, 1]]), 3).tolist() == [[2, 0, 1], [0, 3, 0]]


def test_local_dominant_on_tree(rng):
    tree = tree_ball_graph(3, 3)
    spins = np.full(tree.n, 2)
    spins[1] = 0
    local = sampler.local_dominant(tree, spins, 0, 1, 3, rng)
    assert local.color == 2
    assert local.n1 == pytest.approx(0.75)
    assert local.n2 == pytest.approx(0.25)
    with pytest.raises(ValueError):
        sampler.local_dominant(tree, spins, 0, 0, 3, rng)


def test_local_dominant_all_matches_single_vertex(rng):
    graph = random_regular(GenSpec(100, 3, seed=6))
    spins = rng.integers(3, size=graph.n)
    _, N = sampler.local_dominant_all(graph, spins, 1, 3, rng, d=3)
    for v in range(20):
        local = sampler.local_dominant(graph, spins, v, 1, 3, rng, d=3)
        ordered = np.sort(N[v])
        assert local.n1 == pytest.approx(ordered[-1])
        assert local.n2 == pytest.approx(ordered[-2])


def test_reach_matrix(path3):
    np.testing.assert_array_equal(sampler.reach_matrix(path3, 1).toarray(), [[1, 1, 0], [1, 1, 1], [0, 1, 1]])
    np.testing.assert_array_equal(sampler.reach_matrix(path3, 2).toarray(), np.ones((3, 3)))


# =============================================================================
# === Clusters, Colorings and Bimodality ===
# =============================================================================

def test_cluster_histogram(triangle):
    bonds = BondConfig(np.array([True, False, False, False, False, True]), 3)
    hist = sampler.cluster_histogram(bonds, triangle)
    assert hist.ghost_cluster_size == 1
    assert hist.counts[2] == 1 and hist.counts.sum() == 1
    assert hist.n == 3
    assert hist.mass_at_least(2) == pytest.approx(2 / 3)
    assert sampler.cluster_sizes(bonds, triangle).tolist() == [2]


def test_sim_unif_colors_split(rng):
    coloring = sampler.sim_unif_colors(np.ones(12, dtype=np.int64), 3, rng)
    assert coloring.colors.shape == (12,)
    core = ~coloring.exposed
    per_color = np.bincount(coloring.colors[core], minlength=3)
    assert per_color[0] == per_color[1] == per_color[2]
    assert coloring.exposed_sites == int(coloring.exposed.sum())
    np.testing.assert_array_equal(coloring.recolor(coloring.gamma), coloring.colors)
    # every remainder class is missing at least one color's worth of clusters
    assert np.any(np.bincount(coloring.remainder_class[coloring.exposed], minlength=3) == 0)


def test_bimodality_on_two_clusters():
    values = np.concatenate([np.linspace(0.05, 0.15, 50), np.linspace(0.85, 0.95, 50)])
    report = sampler.bimodality_report(values, 0.1, 0.9)
    assert report['bimodality_coefficient'] > 5 / 9
    assert report['dip_pvalue'] < 0.05
    assert report['free_mode']['count'] == 50 and report['wired_mode']['count'] == 50
    assert report['passed']
    assert sum(report['histogram']) == 100


def test_bimodality_rejects_single_bump():
    values = 0.5 + 0.05 * norm.ppf(np.linspace(0.01, 0.99, 101))
    report = sampler.bimodality_report(values, 0.1, 0.9)
    assert report['bimodality_coefficient'] < 5 / 9
    assert report['dip_pvalue'] > 0.05
    assert not report['separated'] and not report['passed']
    with pytest.raises(ValueError):
        sampler.bimodality_report([0.1, 0.2, 0.3], 0.1, 0.9)

# --- END OF FILE: tests/test_sampler.py ---
