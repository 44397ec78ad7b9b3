# --- Start of File: tests/test_graphgen.py ---
import numpy as np
import pytest

from analysis import graphgen
from analysis.core import Graph, GraphGenerationError, SurgeryError, tree_ball_size
from analysis.graphgen import GenModel, GenSpec


# =============================================================================
# === Generation ===
# =============================================================================

@pytest.mark.parametrize('spec', [
    GenSpec(200, 3, GenModel.CONFIGURATION, seed=1),
    GenSpec(100, 4, GenModel.PERMUTATION, seed=2),
    GenSpec(60, 4, 'CONFIGURATION', seed=3),
])
def test_random_regular_is_simple_and_regular(spec):
    g = graphgen.random_regular(spec)
    assert g.n == spec.n
    assert g.n_edges == spec.n * spec.d // 2
    assert np.all(g.degrees() == spec.d)


def test_random_regular_is_deterministic_per_seed():
    a = graphgen.random_regular(GenSpec(100, 3, seed=7))
    b = graphgen.random_regular(GenSpec(100, 3, seed=7))
    c = graphgen.random_regular(GenSpec(100, 3, seed=8))
    np.testing.assert_array_equal(a.edges, b.edges)
    assert not np.array_equal(a.edges, c.edges)


@pytest.mark.parametrize('n,d,model', [
    (5, 3, 'CONFIGURATION'),
    (10, 3, 'PERMUTATION'),
    (3, 3, 'CONFIGURATION'),
    (10, 0, 'CONFIGURATION'),
])
def test_gen_spec_validation(n, d, model):
    with pytest.raises(ValueError):
        GenSpec(n, d, model)


def test_gen_spec_dict_form():
    spec = GenSpec(20, 4, 'PERMUTATION', seed=5)
    assert spec.to_dict() == {'n': 20, 'd': 4, 'model': 'PERMUTATION', 'seed': 5}
    assert GenSpec.from_dict(spec.to_dict()) == spec
    assert GenSpec.from_dict({'n': 20, 'd': 4}).model is GenModel.CONFIGURATION
    with pytest.raises(ValueError):
        GenSpec(20, 4, 'ERDOS')


def test_generation_budget_exhausted():
    with pytest.raises(GraphGenerationError):
        graphgen.random_regular(GenSpec(50, 3, seed=0), retry_budget=0)


# =============================================================================
# === Balls ===
# =============================================================================

def test_k4_ball_is_not_a_tree(k4):
    b = graphgen.ball(k4, 0, 1)
    assert b.vertices.size == tree_ball_size(3, 1)
    assert not b.is_tree_isomorphic
    assert graphgen.ball_order(k4, 0, 1, 3) is None
    assert not graphgen.tree_like_mask(k4, 1).any()


def test_tree_ball_is_tree_like():
    g = graphgen.tree_ball_graph(3, 3)
    assert g.n == tree_ball_size(3, 3)
    assert graphgen.ball(g, 0, 2, 3).is_tree_isomorphic
    np.testing.assert_array_equal(graphgen.ball_order(g, 0, 3, 3), np.arange(g.n))
    # leaves have degree 1, so only the root sees a full T_3(3)
    mask = graphgen.tree_like_mask(g, 3, 3)
    assert mask.tolist() == [True] + [False] * (g.n - 1)


def test_ball_order_rows_for_random_graph():
    g = graphgen.random_regular(GenSpec(1000, 3, seed=11))
    orders = graphgen.ball_orders(g, 2, 3)
    tree_like = graphgen.tree_like_mask(g, 2, 3)
    assert tree_like.mean() > 0.9
    np.testing.assert_array_equal(orders[:, 0] >= 0, tree_like)
    v = int(np.flatnonzero(tree_like)[0])
    assert orders[v, 0] == v
    assert len(set(orders[v].tolist())) == tree_ball_size(3, 2)


@pytest.mark.parametrize('t', [0, 1, 3])
def test_batched_orders_match_single_vertex_orders(t):
    g = graphgen.random_regular(GenSpec(200, 3, seed=5))
    cut, _ = graphgen.remove_vertex(g, 0)
    for graph in (g, cut):
        orders = graphgen.ball_orders(graph, t, 3)
        for v in range(graph.n):
            single = graphgen.ball_order(graph, v, t, 3)
            if single is None:
                assert orders[v, 0] == -1
            else:
                np.testing.assert_array_equal(orders[v], single)
        np.testing.assert_array_equal(graphgen.tree_like_mask(graph, t, 3), orders[:, 0] >= 0)


def test_ball_radius_zero():
    b = graphgen.ball(graphgen.tree_ball_graph(3, 1), 2, 0)
    assert b.vertices.tolist() == [2]
    assert b.is_tree_isomorphic


# =============================================================================
# === Surgery ===
# =============================================================================

def _star(k):
    return Graph.from_edges(k + 1, [(0, i) for i in range(1, k + 1)])


def test_remove_vertex_relabels():
    g, mapping = graphgen.remove_vertex(_star(4), 2)
    assert mapping.tolist() == [0, 1, -1, 2, 3]
    assert g.edge_list() == [(0, 1), (0, 2), (0, 3)]
    with pytest.raises(ValueError):
        graphgen.remove_vertex(_star(4), 9)


def test_rewire_pairs_neighbors():
    g, mapping = graphgen.rewire(_star(4), 0, [0, 1, 2, 3])
    assert g.n == 4
    assert sorted(g.edge_list()) == [(0, 1), (2, 3)]
    g, _ = graphgen.rewire(_star(4), 0, [0, 2, 1, 3])
    assert sorted(g.edge_list()) == [(0, 2), (1, 3)]


def test_rewire_keeps_degrees_of_regular_graph():
    g = graphgen.random_regular(GenSpec(40, 4, seed=4))
    pi = np.arange(4)
    try:
        out, _ = graphgen.rewire(g, 0, pi)
    except SurgeryError:
        pytest.skip("vertex 0 has adjacent neighbors in this sample")
    assert np.all(out.degrees() == 4)
    assert out.n == 39


def test_rewire_errors(k4):
    with pytest.raises(SurgeryError):
        graphgen.rewire(k4, 0, [0, 1, 2])
    g = Graph.from_edges(5, [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2)])
    with pytest.raises(SurgeryError):
        graphgen.rewire(g, 0, [0, 1, 2, 3])
    with pytest.raises(ValueError):
        graphgen.rewire(_star(4), 0, [0, 0, 1, 2])


# =============================================================================
# === Expansion ===
# =============================================================================

def test_k4_expansion(k4):
    est = graphgen.expansion_estimate(k4)
    assert est['lambda_2'] == pytest.approx(-1.0, abs=1e-9)
    assert est['certificate'] == pytest.approx(2.0, abs=1e-9)


def test_expansion_needs_connected_graph():
    two_triangles = Graph.from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
    with pytest.raises(ValueError):
        graphgen.expansion_estimate(two_triangles)
    with pytest.raises(ValueError):
        graphgen.expansion_estimate(Graph.from_edges(1, []))


def test_adjacency_matrix_is_symmetric(k4):
    adj = graphgen.adjacency_matrix(k4).toarray()
    np.testing.assert_array_equal(adj, adj.T)
    np.testing.assert_array_equal(adj.sum(axis=1), [3, 3, 3, 3])

# --- END OF FILE: tests/test_graphgen.py ---
