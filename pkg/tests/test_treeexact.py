# --- Start of File: tests/test_treeexact.py ---
import numpy as np
import pytest

from analysis import bethe, treeexact
from analysis.bethe import Region
from analysis.core import Params, tree_ball_size
from analysis.oracle import fixed_point_formula_residual, tree_exactness_residual
from analysis.treeexact import BoundarySpec


@pytest.mark.parametrize('t,boundary,params', [
    (2, BoundarySpec.free(), Params(2, 3, 0.8, 0.1)),
    (2, BoundarySpec.color(1), Params(3, 3, 1.2, 0.0)),
    (1, BoundarySpec.fixed_point('wired'), Params(3, 3, 1.6, 0.0)),
    (1, BoundarySpec.fixed_point('free'), Params(3, 4, 0.9, 0.2)),
    (2, BoundarySpec.fixed_point('wired'), Params(2, 3, 1.1, 0.3)),
])
def test_dynamic_program_matches_enumeration(t, boundary, params):
    assert tree_exactness_residual(t, boundary, params) < 1e-12


@pytest.mark.parametrize('params', [Params(3, 3, 1.6, 0.0), Params(3, 4, 0.9, 0.2), Params(10, 3, 2.0, 0.05)])
def test_fixed_point_boundaries_are_stationary(params):
    assert fixed_point_formula_residual(params, t_max=5) < 1e-10


def test_free_boundary_root_is_uniform_without_field():
    np.testing.assert_allclose(treeexact.root_marginal(3, BoundarySpec.free(), Params(4, 3, 2.0, 0.0)),
                               np.full(4, 0.25), atol=1e-14)


def test_pair_marginal_is_a_symmetric_law():
    pair = treeexact.pair_marginal(3, BoundarySpec.color(0), Params(3, 3, 1.0, 0.0))
    assert pair.sum() == pytest.approx(1.0)
    assert np.all(pair >= 0)
    # the pinned color leaks up to the root
    root = pair.sum(axis=1)
    assert root[0] > root[1] == pytest.approx(root[2])


def test_wired_law_is_color_symmetric_at_zero_field():
    law = treeexact.wired_law(1, Params(3, 3, 1.6, 0.0))
    assert law.tv_distance(law.permuted([1, 0, 2])) < 1e-12
    assert law.tv_distance(law.permuted([2, 1, 0])) < 1e-12
    np.testing.assert_allclose(law.root_marginal(), np.full(3, 1 / 3), atol=1e-12)


def test_wired_law_favors_color_one_with_field():
    law = treeexact.wired_law(1, Params(3, 3, 1.6, 0.1))
    root = law.root_marginal()
    assert root[0] > 0.5 and root[1] == pytest.approx(root[2])


def test_neighborhood_law_marginalizes_consistently():
    p = Params(2, 3, 0.7, 0.2)
    deep = treeexact.neighborhood_law(2, 2, BoundarySpec.free(), p)
    shallow = treeexact.neighborhood_law(1, 2, BoundarySpec.free(), p)
    root = treeexact.neighborhood_law(0, 2, BoundarySpec.free(), p)
    assert deep.marginal(1).tv_distance(shallow) < 1e-12
    np.testing.assert_allclose(root.probs, treeexact.root_marginal(2, BoundarySpec.free(), p), atol=1e-14)


@pytest.mark.parametrize('boundary,params', [
    (BoundarySpec.color(3), Params(3, 3, 1.0, 0.0)),
    (BoundarySpec.fixed_point_color(1), Params(3, 3, 1.0, 0.1)),
])
def test_boundary_validation(boundary, params):
    with pytest.raises(ValueError):
        treeexact.root_marginal(2, boundary, params)


def test_boundary_labels_and_bad_depths():
    assert BoundarySpec.color(1).label() == 'COLOR(2)'
    assert BoundarySpec.fixed_point('free').label() == 'FIXEDPOINT_FREE'
    with pytest.raises(ValueError):
        BoundarySpec.fixed_point('cold')
    p = Params(3, 3, 1.0, 0.0)
    with pytest.raises(ValueError):
        treeexact.neighborhood_law(2, 1, BoundarySpec.free(), p)
    with pytest.raises(ValueError):
        treeexact.neighborhood_law(0, 0, BoundarySpec.free(), p)
    with pytest.raises(ValueError):
        treeexact.potts_tree_messages(0, BoundarySpec.free(), p)


def test_connectivities():
    p = Params(3, 3, 0.0, 0.0)
    np.testing.assert_allclose(treeexact.rcm_edge_connectivity(2, 'free', p), 0.0, atol=1e-14)
    assert treeexact.rcm_edge_connectivity(2, 'free', p).shape == (tree_ball_size(3, 2) - 1,)
    assert treeexact.ghost_connectivity('free', p) == pytest.approx(0.0, abs=1e-14)
    B = 0.5 * bethe.B_plus_global(p)
    hot = p.replace(beta=0.5 * (bethe.beta_c(B, p) + bethe.beta_plus(B, p)), B=B)
    assert bethe.classify_region(hot).region is Region.R_1
    assert 0 < treeexact.ghost_connectivity('free', hot) < treeexact.ghost_connectivity('wired', hot) < 1
    phi = treeexact.rcm_edge_connectivity(1, 'wired', hot)
    assert np.all((phi > 0) & (phi < 1))

# --- END OF FILE: tests/test_treeexact.py ---
