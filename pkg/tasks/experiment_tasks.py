# --- Start of File: tasks/experiment_tasks.py ---
import logging
import os
import json
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from celery import Task
from celery.exceptions import Ignore

import database as db
from analysis import bethe, oracle, sampler, treeexact
from analysis.bethe import Region
from analysis.core import Params, PottsError
from analysis.graphgen import GenSpec, ball_orders, expansion_estimate, random_regular, tree_like_mask
from analysis.oracle import check_row
from analysis.treeexact import BoundarySpec
from config import Config, ExperimentConfig
from utils import error_utils, io_utils, plotting
from tasks.chain_tasks import chain_runner, dispatch_chains

from celery_app import celery_app

logger = logging.getLogger(__name__)
config = Config()

# --- Retry Policy Defaults ---
RETRYABLE_EXCEPTIONS = (RuntimeError, ConnectionError, TimeoutError, OSError)
# PottsError is deterministic (caps, convergence, brackets), so it never retries.
NON_RETRYABLE_EXCEPTIONS = (ValueError, TypeError, KeyError, json.JSONDecodeError, PottsError)


# =============================================================================
# === Shared Helpers ===
# =============================================================================

def _params(cfg):
    return Params(**cfg.params)


def _graph(cfg):
    """ Graph from extra.graph_path when given, otherwise generated from cfg.gen. """
    path = cfg.extra.get('graph_path')
    if path:
        return io_utils.read_graph(path), None
    spec = GenSpec.from_dict(cfg.gen)
    return random_regular(spec), spec


def _point_seeds(cfg, count):
    return np.random.SeedSequence(int(cfg.master_seed)).spawn(count)


def _map_ordered(fn, items, threads):
    """ map() over a thread pool; results keep the input order. """
    items = list(items)
    threads = max(1, int(threads or 1))
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads, thread_name_prefix='point') as pool:
        return list(pool.map(fn, items))


def _at_most(name, instance, value, limit):
    """ Passes iff value <= limit; the residual is the excess. """
    return check_row(name, instance, max(0.0, value - limit) + float(value > limit), tol=1e-12)


def _at_least(name, instance, value, limit):
    return check_row(name, instance, max(0.0, limit - value) + float(value < limit), tol=1e-12)


def _within_se(name, instance, report, target, n_se=3.0):
    excess = abs(report.mean - target) - n_se * report.stderr
    return check_row(name, instance, max(0.0, excess) + float(excess > 0), tol=1e-12)


def _reference_kind(region):
    return 'wired' if region is Region.R_1 else 'free'


def _reference_law(t, region, params):
    if region is Region.R_1:
        return treeexact.wired_law(t, params)
    return treeexact.neighborhood_law(t, t, BoundarySpec.fixed_point('free'), params)


# =============================================================================
# === Experiment Bodies ===
# =============================================================================
# Each body takes (cfg, out_dir) and returns a dict with optional keys
# rows/columns (results.csv), checks, summary and files.

def run_gen(cfg, out_dir):
    spec = GenSpec.from_dict(cfg.gen)
    graph = random_regular(spec)
    files = [io_utils.write_graph(os.path.join(out_dir, 'graph.txt'), graph)]
    if cfg.extra.get('out'):
        io_utils.write_graph(cfg.extra['out'], graph)
    t = int(cfg.extra.get('t', 2))
    tree_like = float(tree_like_mask(graph, t, spec.d).mean())
    row = {'n': spec.n, 'd': spec.d, 'model': spec.model.value, 'seed': spec.seed, 'n_edges': graph.n_edges,
           't': t, 'tree_like_fraction': tree_like, 'lambda_2': float('nan'), 'certificate': float('nan')}
    if cfg.extra.get('expansion', True):
        try:
            cert = expansion_estimate(graph, seed=cfg.master_seed)
            row['lambda_2'], row['certificate'] = cert['lambda_2'], cert['certificate']
        except ValueError as e:
            logger.warning(f"Expansion estimate skipped: {e}")
    degrees = graph.degrees()
    checks = [check_row('regular_degree', f"n={spec.n},d={spec.d}",
                        float(np.abs(degrees - spec.d).max(initial=0)), tol=0.5)]
    return {'rows': [row], 'checks': checks, 'summary': row, 'files': files}


def _curve_checks(curves, params):
    q, d = params.q, params.d
    instance = f"q={q},d={d}"
    checks = [check_row('curve_trace', instance, float(len(curves.failures)), tol=0.5)]
    if q == 2:
        checks.append(check_row('ising_degenerate_region', instance, curves.B_plus, tol=1e-8))
        return checks
    interior = curves.Bs < curves.B_plus
    bf, bc, bp = curves.beta_free[interior], curves.beta_c[interior], curves.beta_plus[interior]
    finite = np.isfinite(bf) & np.isfinite(bc) & np.isfinite(bp)
    bad = int(np.sum(~((bf < bc) & (bc < bp)) & finite)) + int(not finite.any())
    checks.append(check_row('curve_ordering', instance, float(bad), tol=0.5))
    lo, hi = bethe.B_pm(curves.beta_minus, params)
    checks.append(check_row('curve_merge', instance, abs(lo - hi), tol=1e-5))
    return checks


def _closed_form_checks(params):
    instance = f"q={params.q},d={params.d}"
    bc0 = bethe.beta_c(0.0, params)
    closed = bethe.beta_c_zero_closed_form(params)
    checks = [check_row('beta_c_closed_form', instance, abs(bc0 - closed), tol=1e-8)]
    _, m = bethe.percolation_factor(params.replace(beta=bc0))
    if params.q == 2:
        checks.append(check_row('percolation_factor', instance, abs(m - 1.0), tol=1e-10))
    else:
        checks.append(_at_most('percolation_factor', instance, m, 1.0 - 1e-12))
    return checks, bc0, m


def _psi_checks(params, Bs, delta):
    """ log Psi^sym at b_free and b_wired against max Phi on the critical line (even d). """
    q, d = params.q, params.d
    checks = []
    if q < 3 or d % 2:
        return checks
    B_top = bethe.B_plus_global(params)
    dropped = [b for b in Bs if not 0.0 < b < B_top]
    if dropped:
        logger.warning(f"Psi checks skip B={dropped} at q={q}, d={d}: "
                       f"the critical line only spans 0 < B < {B_top:.6g}")
    for B in [b for b in Bs if 0.0 < b < B_top]:
        p = params.replace(beta=bethe.beta_c(B, params), B=float(B))
        nu_free = bethe.fixed_point_measure('free', p)
        nu_1 = bethe.fixed_point_measure('wired', p)
        wh_phi = max(bethe.bethe_functional(nu_free, p), bethe.bethe_functional(nu_1, p))
        instance = f"q={q},d={d},B={B},beta_c={p.beta:.12g}"
        for label, nu in (('free', nu_free), ('wired', nu_1)):
            value = float(bethe.log_psi_sym(np.full(d, nu.b), p))
            checks.append(check_row(f'psi_identity_{label}', instance, abs(value - wh_phi), tol=1e-6))
        if d > 4:
            continue
        if nu_1.b - nu_free.b <= 2.0 * delta:
            logger.info(f"Lambda_delta is vacuous at {instance}: b range {nu_1.b - nu_free.b:.3g} <= 2 delta")
            checks.append(check_row('lambda_delta_gap', instance + ',vacuous', 0.0))
            continue
        try:
            gap = bethe.lambda_delta_gap(delta, p)
        except ValueError:
            gap = bethe.lambda_delta_gap(delta, p, resolution=81)
        checks.append(_at_least('lambda_delta_gap', f"{instance},delta={delta}", gap, 1e-15))
    return checks


def run_phase(cfg, out_dir):
    base = _params(cfg)
    panels = cfg.extra.get('panels') or [[base.q, base.d]]
    n_points = int(cfg.extra.get('n_points', 41))
    psi_Bs = [float(b) for b in cfg.extra.get('psi_Bs', [0.01, 0.02, 0.05])]
    delta = float(cfg.extra.get('delta', 0.05))
    n_derivative = int(cfg.extra.get('derivative_samples', 50))
    rows, checks, curves_list, panel_summary = [], [], [], []
    for q, d in panels:
        p = Params(int(q), int(d), 0.0, 0.0)
        curves = bethe.trace_critical_curves(p, n_points)
        curves_list.append(curves)
        rows.extend({'q': p.q, 'd': p.d, **r} for r in curves.rows())
        checks.extend(_curve_checks(curves, p))
        closed, bc0, m = _closed_form_checks(p)
        checks.extend(closed)
        checks.extend(_psi_checks(p, psi_Bs, delta))
        if n_derivative > 0:
            checks.extend(_region_derivative_checks(p, n_derivative, cfg.master_seed))
        panel_summary.append({'q': p.q, 'd': p.d, 'B_plus': curves.B_plus, 'beta_minus': curves.beta_minus,
                              'beta_c_zero': bc0, 'percolation_factor_at_beta_c': m,
                              'failures': curves.failures})
    files = [plotting.plot_phase_diagram(curves_list, os.path.join(out_dir, 'phase.svg'))]
    if cfg.betas and cfg.Bs:
        points = bethe.region_scan(base, cfg.betas, cfg.Bs)
        files.append(io_utils.write_csv(os.path.join(out_dir, 'regions.csv'), [pt.as_row() for pt in points]))
    return {'rows': rows, 'columns': ['q', 'd', 'B', 'beta_free', 'beta_c', 'beta_plus'],
            'checks': checks, 'summary': {'panels': panel_summary}, 'files': files}


def _derivative_checks(params, region, h=1e-5):
    """ 2 dPhi/dbeta against the internal-energy prediction, dPhi/dB against the magnetization. """
    checks = []
    steady = params.beta > h and all(
        bethe.classify_region(params.replace(beta=params.beta + s)).region is region for s in (-h, h))
    steady_field = params.B > h and all(
        bethe.classify_region(params.replace(B=params.B + s)).region is region for s in (-h, h))
    for dd in ('free', 'wired'):
        instance = f"{dd},q={params.q},d={params.d},beta={params.beta},B={params.B}"
        beta_rel, field_rel = bethe.derivative_residuals(dd, params, h)
        if params.beta > h and steady:
            checks.append(check_row('beta_derivative', instance, beta_rel, tol=1e-4))
        if steady_field and field_rel is not None:
            checks.append(check_row('field_derivative', instance, field_rel, tol=1e-4))
    return checks


def _region_derivative_checks(params, n, seed, margin=1e-3):
    """ Worst derivative residual over n rejection-sampled points per region. """
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)).spawn(1)[0])
    checks = []
    for region in Region:
        instance = f"q={params.q},d={params.d},region={region.value},n={n},margin={margin}"
        try:
            points = bethe.sample_region_points(params, region, n, rng, margin=margin)
        except ValueError as e:
            logger.info(f"Derivative sampling skipped for {region.value}: {e}")
            continue
        worst = 0.0
        for p in points:
            for dd in ('free', 'wired'):
                beta_rel, field_rel = bethe.derivative_residuals(dd, p)
                worst = max(worst, beta_rel, field_rel if field_rel is not None else 0.0)
        logger.info(f"Derivative residual over {len(points)} {region.value} points: {worst:.3e}")
        checks.append(check_row('region_derivatives', instance, worst, tol=1e-4))
    return checks


def run_fixedpoint(cfg, out_dir):
    p = _params(cfg)
    point = bethe.classify_region(p)
    pi, m = bethe.percolation_factor(p)
    summary = {
        'params': p.to_dict(),
        'region': point.region.value,
        'nu_free': point.nu_free.as_vector().tolist(),
        'nu_1': point.nu_1.as_vector().tolist(),
        'phi_free': point.phi_free,
        'phi_1': point.phi_1,
        'percolation_pi': pi,
        'branching_factor': m,
    }
    rows = []
    for dd, nu, phi in (('free', point.nu_free, point.phi_free), ('wired', point.nu_1, point.phi_1)):
        rows.append({'fixed_point': dd, 'a': nu.a, 'c': nu.c, 'b': nu.b, 'phi': phi,
                     'internal_energy': bethe.internal_energy_prediction(dd, p),
                     'magnetization': bethe.magnetization_prediction(dd, p),
                     'ghost_connectivity': treeexact.ghost_connectivity(dd, p)})
    return {'rows': rows, 'checks': _derivative_checks(p, point.region), 'summary': summary}


def run_sample(cfg, out_dir):
    graph, spec = _graph(cfg)
    p = _params(cfg)
    names = list(cfg.extra.get('estimators', ['internal_energy', 'magnetization']))
    initial = cfg.extra.get('initial', 'random')
    jobs = sampler.make_jobs([p] * max(1, cfg.n_chains), cfg.master_seed, cfg.burn_in, cfg.n_samples, cfg.thin,
                             names, initial)
    results = dispatch_chains(graph, jobs, cfg.threads, spec)
    rows = []
    for name in names:
        merged = sampler.merge_reports(sampler.EstimatorReport.from_dict(r['reports'][name]) for r in results)
        rows.append(merged.to_dict())
    files = []
    if cfg.extra.get('dump_snapshots'):
        snaps = sampler.run_chain(graph, p, cfg.burn_in, cfg.n_samples, cfg.thin, jobs[0].seed, initial)
        files.append(io_utils.write_snapshots(os.path.join(out_dir, 'snapshots.txt'), snaps))
    if cfg.extra.get('out'):
        io_utils.write_json(cfg.extra['out'], {'params': p.to_dict(), 'gen': cfg.gen, 'estimators': rows})
    return {'rows': rows, 'checks': [], 'summary': {'params': p.to_dict(), 'estimators': rows, 'chains': results},
            'files': files}


def _default_lwc_points(base):
    """ Two (beta, B) points per region, placed relative to the zero-field curves. """
    zero = base.replace(B=0.0)
    bc0 = bethe.beta_c(0.0, zero)
    if base.q == 2:
        return [[0.5 * bc0, 0.0], [0.8 * bc0, 0.2], [1.5 * bc0, 0.0], [1.5 * bc0, 0.1]]
    bf0 = bethe.beta_free(0.0, zero)
    width = bc0 - bf0
    return [[0.5 * bf0, 0.0], [1.0, 0.2],
            [bc0 - 0.5 * width, 0.0], [bc0 - 0.25 * width, 0.0],
            [bc0 + 0.25, 0.0], [bc0 + 0.5, 0.0]]


def run_lwc(cfg, out_dir):
    graph, spec = _graph(cfg)
    base = _params(cfg)
    d = spec.d if spec is not None else base.d
    t = int(cfg.extra.get('t', 1))
    tv_limit = float(cfg.extra.get('tv_limit', 0.05))
    points = cfg.extra.get('points') or _default_lwc_points(base)
    orders = ball_orders(graph, t, d)
    mask = tree_like_mask(graph, 2 * t, d)
    seeds = _point_seeds(cfg, len(points))

    def work(i):
        beta, B = points[i]
        p = base.replace(beta=float(beta), B=float(B))
        region = bethe.classify_region(p).region
        initial = 'ordered' if region is Region.R_1 else 'random'
        snaps = list(sampler.run_chain(graph, p, cfg.burn_in, cfg.n_samples, cfg.thin, seeds[i], initial))
        law = sampler.neighborhood_law_estimate(graph, snaps, t, p.q, d, orders, mask)
        kind = _reference_kind(region)
        tv = law.tv_distance(_reference_law(t, region, p))
        edge = sampler.edge_connectivity(snaps, graph)
        ghost = sampler.ghost_connectivity(snaps, graph)
        edge_ref = float(treeexact.rcm_edge_connectivity(t, kind, p)[0])
        ghost_ref = treeexact.ghost_connectivity(kind, p) if p.B > 0 else 0.0
        instance = f"beta={p.beta:.6g},B={p.B:.6g},{region.value}"
        exploratory = region is Region.R_C
        checks = [_at_most('lwc_tv', instance, tv, tv_limit), _within_se('lwc_edge_connectivity', instance, edge, edge_ref)]
        if p.B > 0:
            checks.append(_within_se('lwc_ghost_connectivity', instance, ghost, ghost_ref))
        for c in checks:
            c['exploratory'] = exploratory
        row = {'beta': p.beta, 'B': p.B, 'region': region.value, 'reference': kind, 'initial': initial,
               'tv': tv, 'edge_connectivity': edge.mean, 'edge_connectivity_se': edge.stderr,
               'edge_connectivity_ref': edge_ref, 'ghost_connectivity': ghost.mean,
               'ghost_connectivity_se': ghost.stderr, 'ghost_connectivity_ref': ghost_ref}
        logger.info(f"LWC point {i}: {instance} TV={tv:.4g}")
        return row, checks

    outcomes = _map_ordered(work, range(len(points)), cfg.threads)
    rows = [r for r, _ in outcomes]
    checks = [c for _, cs in outcomes for c in cs]
    return {'rows': rows, 'checks': checks, 'summary': {'t': t, 'tree_like_roots': int(mask.sum()), 'points': rows}}


def run_purestate(cfg, out_dir):
    graph, spec = _graph(cfg)
    base = _params(cfg).replace(B=0.0)
    d = spec.d if spec is not None else base.d
    q = base.q
    t = int(cfg.extra.get('t', 1))
    ell = int(cfg.extra.get('ell', 3))
    tv_limit = float(cfg.extra.get('tv_limit', 0.05))
    betas = [float(b) for b in (cfg.betas or [1.0, 1.6])]
    bc0 = bethe.beta_c(0.0, base)
    orders = ball_orders(graph, t, d)
    mask = tree_like_mask(graph, 2 * t, d)
    iso = tree_like_mask(graph, 2 * ell, d)
    reach = sampler.reach_matrix(graph, ell)
    seeds = _point_seeds(cfg, len(betas))

    def work(i):
        p = base.replace(beta=betas[i])
        below = p.beta < bc0
        _, tie_rng, coloring_rng = sampler.chain_streams(seeds[i])
        snaps = list(sampler.run_chain(graph, p, cfg.burn_in, cfg.n_samples, cfg.thin, seeds[i],
                                       'random' if below else 'ordered'))
        rows, checks = [], []
        for k in range(q):
            cond = [sampler.ChainState(sampler.condition_on_dominant(s.spins, k, p, tie_rng), s.bonds, s.step)
                    for s in snaps]
            law = sampler.neighborhood_law_estimate(graph, cond, t, q, d, orders, mask)
            boundary = BoundarySpec.fixed_point('free') if below else BoundarySpec.fixed_point_color(k)
            tv = law.tv_distance(treeexact.neighborhood_law(t, t, boundary, p))
            hits = [np.mean(sampler.local_dominant_all(graph, c.spins, ell, q, tie_rng, d, iso, reach)[0] == k)
                    for c in cond]
            local_share = float(np.mean(hits))
            instance = f"beta={p.beta},k={k + 1}"
            checks.append(_at_most('purestate_tv', instance, tv, tv_limit))
            if not below:
                checks.append(_at_least('local_dominant_share', f"{instance},ell={ell}", local_share, 0.9))
            rows.append({'beta': p.beta, 'k': k + 1, 'phase': 'free' if below else 'ordered',
                         'reference': boundary.label(), 'tv': tv, 'local_dominant_share': local_share})
        if below:
            counts = np.zeros(q)
            exposed = []
            for s in snaps:
                K, _ = sampler.local_dominant_all(graph, s.spins, ell, q, tie_rng, d, iso, reach)
                counts += np.bincount(K, minlength=q)
                coloring = sampler.sim_unif_colors(sampler.cluster_sizes(s.bonds, graph), q, coloring_rng)
                exposed.append(coloring.exposed_sites / graph.n)
            deviation = float(np.max(np.abs(counts / counts.sum() - 1.0 / q)))
            exposed_mean = float(np.mean(exposed))
            checks.append(_at_most('local_dominant_uniform', f"beta={p.beta},ell={ell}", deviation, tv_limit))
            checks.append(_at_most('sim_unif_exposed_fraction', f"beta={p.beta}", exposed_mean, 0.05))
            for row in rows:
                row.update({'local_color_deviation': deviation, 'exposed_fraction': exposed_mean})
        return rows, checks

    outcomes = _map_ordered(work, range(len(betas)), cfg.threads)
    rows = [r for rs, _ in outcomes for r in rs]
    checks = [c for _, cs in outcomes for c in cs]
    return {'rows': rows, 'checks': checks, 'summary': {'beta_c_zero': bc0, 't': t, 'ell': ell, 'points': rows}}


def run_critical(cfg, out_dir):
    graph, spec = _graph(cfg)
    base = _params(cfg)
    B = float(cfg.extra.get('B', base.B if base.B > 0 else 0.01))
    p = base.replace(beta=bethe.beta_c(B, base), B=B)
    region = bethe.classify_region(p).region
    exploratory = bool(p.d % 2 or B == 0.0)
    factor = int(cfg.extra.get('budget_factor', 4))
    n_chains = max(2, cfg.n_chains)
    seeds = _point_seeds(cfg, n_chains)
    if exploratory:
        logger.warning(f"Critical run at d={p.d}, B={B} lies outside the proven setting (even d, B > 0); "
                       f"results are exploratory")

    def work(i):
        initial = 'random' if i % 2 == 0 else 'ordered'
        snaps = sampler.run_chain(graph, p, factor * cfg.burn_in, factor * cfg.n_samples, cfg.thin, seeds[i], initial)
        return [float(np.mean(s.spins.base_colors() == 0)) for s in snaps]

    values = np.concatenate([np.asarray(v) for v in _map_ordered(work, range(n_chains), cfg.threads)])
    free_pred = bethe.magnetization_prediction('free', p)
    wired_pred = bethe.magnetization_prediction('wired', p)
    report = sampler.bimodality_report(values, free_pred, wired_pred)
    instance = f"q={p.q},d={p.d},B={B},beta_c={p.beta:.10g}"
    checks = [check_row('critical_region', instance, float(region is not Region.R_C), tol=0.5),
              check_row('critical_bimodality', instance, float(not report['passed']), tol=0.5)]
    for c in checks:
        c['exploratory'] = exploratory
    edges = report['bin_edges']
    rows = [{'bin_left': edges[i], 'bin_right': edges[i + 1], 'count': c} for i, c in enumerate(report['histogram'])]
    summary = {'params': p.to_dict(), 'region': region.value, 'exploratory': exploratory,
               'budget_factor': factor, 'n_chains': n_chains, 'bimodality': report}
    return {'rows': rows, 'checks': checks, 'summary': summary}


def _transition_beta(params):
    """ beta at which the dominant phase switches along fixed B, or None. """
    if params.q == 2:
        return bethe.beta_c(0.0, params) if params.B == 0.0 else None
    if params.B >= bethe.B_plus_global(params):
        return None
    return bethe.beta_c(params.B, params)


def run_free_energy(cfg, out_dir):
    graph, spec = _graph(cfg)
    base = _params(cfg)
    betas = [float(b) for b in (cfg.betas or [base.beta])]
    Bs = [float(b) for b in (cfg.Bs or [base.B])]
    n_grid = int(cfg.extra.get('n_grid', 41))
    runner = chain_runner(graph, cfg.threads, spec)
    grid_points = [(beta, B) for B in Bs for beta in betas]
    seeds = [int(s.generate_state(1)[0]) for s in _point_seeds(cfg, len(grid_points))]
    rows, checks = [], []
    path_done = not cfg.extra.get('path_check', False)
    for (beta, B), seed in zip(grid_points, seeds):
        p = base.replace(beta=beta, B=B)
        point = bethe.classify_region(p)
        target = max(point.phi_free, point.phi_1)
        transition = _transition_beta(p)
        refine = [transition] if transition is not None and transition < beta else None
        grid = sampler.ti_grid(beta, n_points=n_grid, refine_at=refine)

        def initial(pp, transition=transition):
            return 'ordered' if transition is not None and pp.beta >= transition else 'random'

        est = sampler.free_energy_ti(graph, p, grid, runner, seed, cfg.burn_in, cfg.n_samples, cfg.thin, initial)
        rel = abs(est.value - target) / abs(target)
        instance = f"q={p.q},d={p.d},beta={beta},B={B}"
        checks.append(_at_most('free_energy_relative', instance, rel, 0.01))
        row = {'q': p.q, 'd': p.d, 'beta': beta, 'B': B, 'region': point.region.value, 'phi_hat': est.value,
               'mc_stderr': est.mc_stderr, 'quadrature_error': est.quadrature_error, 'bethe_phi': target,
               'relative_error': rel, 'path_phi_hat': float('nan')}
        if not path_done and B > 0.0:
            other = sampler.free_energy_field_path(graph, p, runner=runner, master_seed=seed + 1,
                                                   burn_in=cfg.burn_in, n_samples=cfg.n_samples, thin=cfg.thin,
                                                   initial=initial)
            combined = float(np.hypot(est.error, other.error))
            checks.append(_at_most('free_energy_path_independence', instance,
                                   abs(est.value - other.value), 3.0 * combined))
            row['path_phi_hat'] = other.value
            path_done = True
        logger.info(f"Free energy {instance}: {est.value:.8g} vs Bethe {target:.8g} (rel {rel:.3g})")
        rows.append(row)
    return {'rows': rows, 'checks': checks, 'summary': {'points': rows}}


def run_oracle(cfg, out_dir):
    started = time.monotonic()
    rows = oracle.run_oracle_suite(seed=int(cfg.master_seed), n_graphs=int(cfg.extra.get('n_graphs', 50)))
    elapsed = time.monotonic() - started
    failed = sum(1 for r in rows if not r['pass'])
    summary = {'n_checks': len(rows), 'n_failed': failed, 'max_residual': max(r['max_residual'] for r in rows),
               'elapsed_seconds': round(elapsed, 3)}
    return {'rows': rows, 'columns': ['check_name', 'instance', 'max_residual', 'pass'], 'checks': rows,
            'summary': summary}


# =============================================================================
# === Task Wrapper ===
# =============================================================================

def _execute(task, run_id, config_json, step_name, body):
    logger.info(f"--- Starting {step_name} Task (Attempt {task.request.retries + 1}) for Run ID: {run_id} ---")
    try:
        if task.request.retries == 0:
            db.update_run_status(run_id, 'Running')
        cfg = ExperimentConfig.from_json(config_json)
        config_hash = cfg.config_hash()
        out_dir = io_utils.run_output_dir(cfg.out_dir, step_name, config_hash)

        outcome = body(cfg, out_dir)
        checks = outcome.get('checks', [])
        passed = all(c['pass'] for c in checks if not c.get('exploratory'))
        files = list(outcome.get('files', []))
        if outcome.get('rows'):
            files.append(io_utils.write_csv(os.path.join(out_dir, 'results.csv'), outcome['rows'],
                                            outcome.get('columns')))
        report = {
            'experiment': step_name,
            'run_id': run_id,
            'config': json.loads(cfg.to_json()),
            'config_hash': config_hash,
            'master_seed': cfg.master_seed,
            'passed': passed,
            'checks': checks,
            'summary': outcome.get('summary', {}),
            'files': sorted(os.path.basename(f) for f in files) + ['report.json'],
        }
        io_utils.write_json(os.path.join(out_dir, 'report.json'), report)

        db.add_checks(run_id, checks)
        db.update_run_result(run_id, {'passed': passed, 'n_checks': len(checks), 'output_dir': out_dir}, passed,
                             out_dir)
        logger.info(f"--- {step_name} Task SUCCESS for Run ID: {run_id} (passed={passed}) ---")
        return {'run_id': run_id, 'passed': passed, 'output_dir': out_dir}

    except NON_RETRYABLE_EXCEPTIONS as e:
        logger.error(f"--- {step_name} Task NON-RETRYABLE FAIL for Run ID: {run_id} --- Error: {e}", exc_info=True)
        db.update_run_status(run_id, 'Error', error_message=error_utils.format_error(e))
        raise Ignore()
    except Exception as e:
        logger.warning(f"--- {step_name} Task FAILED (Will Retry If Possible) for Run ID: {run_id} "
                       f"(Attempt {task.request.retries + 1}) --- Error: {e}", exc_info=True)
        db.update_run_status(run_id, 'Error',
                             error_message=f"[Attempt {task.request.retries + 1}] {error_utils.format_error(e)}")
        raise


_TASK_OPTIONS = dict(bind=True, autoretry_for=RETRYABLE_EXCEPTIONS, retry_kwargs={'max_retries': 2, 'countdown': 10})


@celery_app.task(name='tasks.experiment_tasks.gen_task', **_TASK_OPTIONS)
def gen_task(self: Task, run_id: int, config_json: str):
    """ (Celery Task) Generates a random regular graph and writes it in the text format. """
    return _execute(self, run_id, config_json, 'gen', run_gen)


@celery_app.task(name='tasks.experiment_tasks.phase_task', **_TASK_OPTIONS)
def phase_task(self: Task, run_id: int, config_json: str):
    """ (Celery Task) Critical curves, closed-form and Psi checks, SVG panels. """
    return _execute(self, run_id, config_json, 'phase', run_phase)


@celery_app.task(name='tasks.experiment_tasks.fixedpoint_task', **_TASK_OPTIONS)
def fixedpoint_task(self: Task, run_id: int, config_json: str):
    return _execute(self, run_id, config_json, 'fixedpoint', run_fixedpoint)


@celery_app.task(name='tasks.experiment_tasks.sample_task', **_TASK_OPTIONS)
def sample_task(self: Task, run_id: int, config_json: str):
    return _execute(self, run_id, config_json, 'sample', run_sample)


@celery_app.task(name='tasks.experiment_tasks.lwc_task', **_TASK_OPTIONS)
def lwc_task(self: Task, run_id: int, config_json: str):
    """ (Celery Task) Empirical neighborhood laws against the tree references, per region. """
    return _execute(self, run_id, config_json, 'lwc', run_lwc)


@celery_app.task(name='tasks.experiment_tasks.purestate_task', **_TASK_OPTIONS)
def purestate_task(self: Task, run_id: int, config_json: str):
    return _execute(self, run_id, config_json, 'purestate', run_purestate)


@celery_app.task(name='tasks.experiment_tasks.critical_task', **_TASK_OPTIONS)
def critical_task(self: Task, run_id: int, config_json: str):
    return _execute(self, run_id, config_json, 'critical', run_critical)


@celery_app.task(name='tasks.experiment_tasks.free_energy_task', **_TASK_OPTIONS)
def free_energy_task(self: Task, run_id: int, config_json: str):
    return _execute(self, run_id, config_json, 'free_energy', run_free_energy)


@celery_app.task(name='tasks.experiment_tasks.oracle_task', **_TASK_OPTIONS)
def oracle_task(self: Task, run_id: int, config_json: str):
    """ (Celery Task) The exhaustive oracle suite. """
    return _execute(self, run_id, config_json, 'oracle', run_oracle)


EXPERIMENT_TASKS = {
    'gen': gen_task,
    'phase': phase_task,
    'fixedpoint': fixedpoint_task,
    'sample': sample_task,
    'lwc': lwc_task,
    'purestate': purestate_task,
    'critical': critical_task,
    'free_energy': free_energy_task,
    'oracle': oracle_task,
}

# --- END OF FILE: tasks/experiment_tasks.py ---
