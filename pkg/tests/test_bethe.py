# --- Start of File: tests/test_bethe.py ---
import math

import numpy as np
import pytest

from analysis import bethe
from analysis.bethe import Region, Start
from analysis.core import ConvergenceError, Params, SymmetricMeasure


def _p(q, d, beta=0.0, B=0.0):
    return Params(q, d, beta, B)


# =============================================================================
# === Fixed Points ===
# =============================================================================

@pytest.mark.parametrize('beta,B', [(0.6, 0.1), (0.3, 0.0), (3.0, 0.0), (2.0, 0.5)])
def test_bp_iteration_matches_scalar_roots(beta, B):
    p = _p(3, 3, beta, B)
    nu_free = bethe.bp_fixed_point(Start.UNIFORM, p)
    nu_1 = bethe.bp_fixed_point('DELTA_1', p)
    assert nu_free.a == pytest.approx(bethe.fixed_point_measure('free', p).a, abs=1e-9)
    assert nu_1.a == pytest.approx(bethe.fixed_point_measure('wired', p).a, abs=1e-9)
    for nu in (nu_free, nu_1):
        assert bethe.bp_step(nu, p).distance(nu) < 1e-11


def test_bp_fixed_point_budget():
    with pytest.raises(ConvergenceError):
        bethe.bp_fixed_point(Start.DELTA_1, _p(30, 3, 2.5, 0.0), tol=1e-300, max_iter=3)
    with pytest.raises(ValueError):
        bethe.bp_fixed_point(Start.UNIFORM, _p(3, 3, 1.0), tol=0.0)


def test_free_root_is_zero_without_field():
    assert bethe.fixed_point_r('free', _p(5, 4, 4.0, 0.0)) == 0.0
    assert bethe.fixed_point_r('wired', _p(5, 4, 0.0, 0.7)) == 0.7
    with pytest.raises(ValueError):
        bethe.fixed_point_r('sideways', _p(5, 4, 1.0, 0.0))


def test_scalar_roots_solve_equation():
    p = _p(30, 3, 1.5, 0.0)
    roots = bethe.scalar_fixed_points(p)
    assert roots == sorted(roots)
    for r in roots:
        assert bethe.scalar_F(r, p) == pytest.approx(r, abs=1e-9)


def test_bethe_functional_at_uniform_without_coupling():
    # beta = 0, B = 0: Phi = log q for the uniform measure
    p = _p(4, 3, 0.0, 0.0)
    assert bethe.bethe_functional(SymmetricMeasure.uniform(4), p) == pytest.approx(math.log(4))


# =============================================================================
# === Critical Values ===
# =============================================================================

@pytest.mark.parametrize('q', [3, 4, 10, 30])
@pytest.mark.parametrize('d', [3, 4, 10])
def test_zero_field_beta_c_matches_closed_form(q, d):
    p = _p(q, d)
    expected = math.log((q - 2) / ((q - 1) ** (1 - 2 / d) - 1))
    assert bethe.beta_c_zero_closed_form(p) == pytest.approx(expected, rel=1e-14)
    assert bethe.beta_c(0.0, p) == pytest.approx(expected, abs=1e-7)


@pytest.mark.parametrize('d', [3, 4, 6])
def test_ising_critical_point(d):
    p = _p(2, d)
    expected = math.log(d / (d - 2))
    assert bethe.beta_minus(p) == pytest.approx(expected, abs=1e-12)
    assert bethe.beta_c(0.0, p) == pytest.approx(expected, abs=1e-12)
    assert bethe.B_plus_global(p) < 1e-10


@pytest.mark.parametrize('q,d', [(3, 3), (3, 4), (30, 3), (10, 10)])
def test_beta_plus_at_zero_field_is_uniform_instability(q, d):
    p = _p(q, d)
    expected = math.log((q + d - 2) / (d - 2))
    assert bethe.beta_plus(0.0, p) == pytest.approx(expected, rel=1e-14)
    assert bethe.scalar_F_prime(0.0, p.replace(beta=expected)) == pytest.approx(1.0, abs=1e-12)
    assert bethe.beta_free(0.0, p) < bethe.beta_c(0.0, p) < expected


def test_beta_plus_inverts_B_plus():
    p = _p(3, 4)
    B_top = bethe.B_plus_global(p)
    for frac in (0.1, 0.5, 0.9):
        B = frac * B_top
        assert bethe.B_pm(bethe.beta_plus(B, p), p)[1] == pytest.approx(B, abs=1e-9)


def test_beta_c_rejects_field_outside_window():
    p = _p(30, 3)
    B_top = bethe.B_plus_global(p)
    with pytest.raises(ValueError):
        bethe.beta_c(B_top * 1.01, p)
    with pytest.raises(ValueError):
        bethe.beta_c(-0.1, p)


def test_rho_pm_absent_below_beta_minus():
    p = _p(10, 3)
    bm = bethe.beta_minus(p)
    assert bethe.rho_pm(0.5 * bm, p) is None
    lo, hi = bethe.rho_pm(bm + 0.2, p)
    assert lo < hi
    for rho in (lo, hi):
        assert bethe.scalar_F_prime(rho, p.replace(beta=bm + 0.2)) == pytest.approx(1.0, abs=1e-9)


def test_critical_curves_are_ordered_and_merge():
    p = _p(30, 3)
    curves = bethe.trace_critical_curves(p, n_points=9)
    assert curves.failures == []
    assert curves.B_plus > 0
    assert curves.Bs[-1] == pytest.approx(curves.B_plus)
    assert np.all(curves.beta_free <= curves.beta_c + 1e-9)
    assert np.all(curves.beta_c <= curves.beta_plus + 1e-9)
    assert np.all(np.diff(curves.beta_c) <= 1e-9)
    assert curves.beta_free[-1] == curves.beta_c[-1] == curves.beta_plus[-1] == curves.beta_minus
    rows = list(curves.rows())
    assert len(rows) == 9 and set(rows[0]) == {'B', 'beta_free', 'beta_c', 'beta_plus'}


def test_percolation_factor():
    p = _p(3, 4, 1.0, 0.0)
    pe = 1 - math.exp(-1.0)
    pi, m = bethe.percolation_factor(p)
    assert pi == pytest.approx(pe / (pe + 3 * (1 - pe)))
    assert m == pytest.approx(3 * pi)


# =============================================================================
# === Regions ===
# =============================================================================

def test_classify_regions_along_zero_field():
    p = _p(3, 3)
    bc = bethe.beta_c(0.0, p)
    bf = bethe.beta_free(0.0, p)
    assert bethe.classify_region(p.replace(beta=0.3)).region is Region.UNIQUE
    assert bethe.classify_region(p.replace(beta=0.5 * (bf + bc))).region is Region.R_FREE
    assert bethe.classify_region(p.replace(beta=bc)).region is Region.R_C
    assert bethe.classify_region(p.replace(beta=3.0)).region is Region.R_1


def test_region_scan_order():
    points = bethe.region_scan(_p(3, 3), [0.2, 3.0], [0.0, 0.1])
    assert [(pt.params.beta, pt.params.B) for pt in points] == [(0.2, 0.0), (3.0, 0.0), (0.2, 0.1), (3.0, 0.1)]
    row = points[1].as_row()
    assert row['region'] == 'R_1'
    assert row['a_1'] > row['a_free']


@pytest.mark.parametrize('region', list(Region))
def test_region_samples_stay_inside_their_region(region):
    p = _p(30, 3)
    points = bethe.sample_region_points(p, region, 3, np.random.default_rng(7), margin=1e-3)
    assert len(points) == 3
    for pt in points:
        assert pt.B >= 2e-3
        assert bethe.classify_region(pt).region is region
        for kind in ('free', 'wired'):
            beta_rel, field_rel = bethe.derivative_residuals(kind, pt)
            assert beta_rel < 1e-4
            assert field_rel < 1e-4


def test_region_sampling_limits():
    with pytest.raises(ValueError):
        bethe.sample_region_points(_p(2, 3), Region.R_1, 1, np.random.default_rng(0))
    with pytest.raises(ConvergenceError):
        bethe.sample_region_points(_p(30, 3), 'R_1', 1, np.random.default_rng(0), max_draws=0)
    unique = bethe.sample_region_points(_p(2, 3), 'UNIQUE', 2, np.random.default_rng(0))
    assert [pt.q for pt in unique] == [2, 2]


# =============================================================================
# === Psi Functionals ===
# =============================================================================

def test_psi_sym_equals_phi_on_constant_messages():
    p = _p(3, 4, 0.9, 0.05)
    for b in (0.0, 0.2, 0.7):
        nu = SymmetricMeasure.from_b(b, 3)
        value = float(bethe.log_psi_sym(np.full(4, nu.b), p))
        assert value == pytest.approx(bethe.bethe_functional(nu, p), abs=1e-12)


def test_psi_identity_on_critical_line():
    p = _p(10, 4)
    B = 0.2 * bethe.B_plus_global(p)
    crit = p.replace(beta=bethe.beta_c(B, p), B=B)
    phi = max(bethe.bethe_functional(bethe.fixed_point_measure(k, crit), crit) for k in ('free', 'wired'))
    for kind in ('free', 'wired'):
        b = bethe.fixed_point_measure(kind, crit).b
        assert float(bethe.log_psi_sym(np.full(4, b), crit)) == pytest.approx(phi, abs=1e-6)


def test_psi_identity_near_merge_point():
    p = _p(3, 4)
    B = 0.01
    assert B < bethe.B_plus_global(p)
    crit = p.replace(beta=bethe.beta_c(B, p), B=B)
    nu_free = bethe.fixed_point_measure('free', crit)
    nu_1 = bethe.fixed_point_measure('wired', crit)
    phi = max(bethe.bethe_functional(nu_free, crit), bethe.bethe_functional(nu_1, crit))
    for nu in (nu_free, nu_1):
        assert float(bethe.log_psi_sym(np.full(4, nu.b), crit)) == pytest.approx(phi, abs=1e-6)
    # delta = 0.05 is vacuous once the fixed points are closer than 0.1 in b
    delta = min(0.05, 0.25 * (nu_1.b - nu_free.b))
    assert bethe.lambda_delta_gap(delta, crit) > 0.0


def test_psi_e_sym_averages_matchings():
    p = _p(3, 4, 0.8, 0.0)
    b = np.array([0.1, 0.4, 0.2, 0.9])
    assert len(bethe.perfect_matchings(4)) == 3
    assert len(bethe.perfect_matchings(6)) == 15
    direct = np.mean([bethe.psi_e(b[list(m)], p) for m in bethe.perfect_matchings(4)])
    assert bethe.psi_e_sym(b, p) == pytest.approx(direct, rel=1e-12)
    assert bethe.psi_sym(b, p) == pytest.approx(bethe.psi_vx(b, p) / direct, rel=1e-12)


def test_edge_functionals_need_even_degree():
    p = _p(3, 3, 0.8, 0.0)
    with pytest.raises(ValueError):
        bethe.log_psi_e(np.zeros(3), p)
    with pytest.raises(ValueError):
        bethe.log_psi_vx(np.zeros(4), p)
    with pytest.raises(ValueError):
        bethe.lambda_delta_gap(0.05, p)
    with pytest.raises(ValueError):
        bethe.lambda_delta_gap(0.0, _p(3, 4, 1.0))


def test_lambda_delta_gap_is_finite():
    p = _p(10, 4)
    B = 0.2 * bethe.B_plus_global(p)
    crit = p.replace(beta=bethe.beta_c(B, p), B=B)
    assert math.isfinite(bethe.lambda_delta_gap(0.01, crit, resolution=21))


def test_wh_bp_fixes_fixed_point_messages():
    p = _p(3, 3, 1.6, 0.1)
    for kind in ('free', 'wired'):
        b = bethe.fixed_point_measure(kind, p).b
        assert bethe.wh_bp(np.full(p.d - 1, b), p.B, p) == pytest.approx(b, abs=1e-9)


# =============================================================================
# === Thermodynamic Predictions ===
# =============================================================================

@pytest.mark.parametrize('kind', ['free', 'wired'])
def test_phi_derivatives_match_predictions(kind):
    p, h = _p(3, 3, 0.6, 0.1), 1e-5

    def phi(pp):
        return bethe.bethe_functional(bethe.fixed_point_measure(kind, pp), pp)

    d_beta = (phi(p.replace(beta=p.beta + h)) - phi(p.replace(beta=p.beta - h))) / (2 * h)
    d_field = (phi(p.replace(B=p.B + h)) - phi(p.replace(B=p.B - h))) / (2 * h)
    assert 2 * d_beta == pytest.approx(bethe.internal_energy_prediction(kind, p), rel=1e-5)
    assert d_field == pytest.approx(bethe.magnetization_prediction(kind, p), rel=1e-5)


def test_predictions_at_infinite_temperature():
    p = _p(4, 3, 0.0, 0.0)
    assert bethe.internal_energy_prediction('free', p) == pytest.approx(3 / 4)
    assert bethe.magnetization_prediction('free', p) == pytest.approx(1 / 4)
    with pytest.raises(ValueError):
        bethe.magnetization_prediction('cold', p)


def test_psi_along_tangent_curves_changes_sign():
    p = _p(30, 3)
    bm = bethe.beta_minus(p)
    beta = bm + 0.5 * (bethe.beta_free(0.0, p) - bm)
    assert bethe.psi_minus(beta, p) < 0 < bethe.psi_plus(beta, p)

# --- END OF FILE: tests/test_bethe.py ---
