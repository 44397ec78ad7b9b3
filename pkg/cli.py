# --- Start of File: cli.py ---
import argparse
import logging
import logging.handlers
import os
import sys
import json

from config import Config, ExperimentConfig
import database as db
from utils import error_utils

config = Config()
logger = logging.getLogger('cli')

SUBCOMMANDS = ('gen', 'phase', 'fixedpoint', 'sample', 'lwc', 'purestate', 'critical', 'free-energy', 'oracle')

# Defaults a subcommand applies before --config and flags.
EXPERIMENT_DEFAULTS = {
    'gen': {},
    'phase': {'params': {'q': 30, 'd': 3, 'beta': 1.0, 'B': 0.0}, 'extra': {'panels': [[30, 3], [30, 10]]}},
    'fixedpoint': {},
    'sample': {},
    'lwc': {'params': {'q': 3, 'd': 3, 'beta': 1.0, 'B': 0.0}},
    'purestate': {'params': {'q': 3, 'd': 3, 'beta': 1.0, 'B': 0.0}, 'betas': [1.0, 1.6]},
    'critical': {'params': {'q': 30, 'd': 4, 'beta': 1.0, 'B': 0.01},
                 'gen': {'n': 10000, 'd': 4, 'model': 'CONFIGURATION', 'seed': 0}, 'n_chains': 4},
    'free_energy': {'params': {'q': 2, 'd': 3, 'beta': 1.0, 'B': 0.0}},
    'oracle': {},
}


# ======================================
# === Logging Configuration ===
# ======================================

def configure_logging():
    log_formatter = logging.Formatter('%(asctime)s [%(levelname)s] [%(threadName)s] [%(name)s] %(message)s')
    log_level = getattr(logging, config.LOG_LEVEL.upper(), logging.INFO)
    console_handler = logging.StreamHandler(sys.stdout); console_handler.setFormatter(log_formatter)
    log_dir = os.path.dirname(config.LOG_FILE_PATH)
    if log_dir and not os.path.exists(log_dir): os.makedirs(log_dir, exist_ok=True)
    file_handler = logging.handlers.RotatingFileHandler(config.LOG_FILE_PATH, maxBytes=10*1024*1024, backupCount=5,
                                                        encoding='utf-8')
    file_handler.setFormatter(log_formatter)
    logging.getLogger().handlers.clear(); logging.basicConfig(level=log_level, handlers=[console_handler, file_handler])
    logging.getLogger('celery').setLevel(logging.WARNING)
    logger.info("=" * 50)
    logger.info(f"Log Level: {config.LOG_LEVEL}")
    logger.info(f"Ledger: {config.DATABASE_PATH}")
    logger.info(f"Results Dir: {config.RESULTS_DIR}")
    logger.info(f"Celery: {'eager (in-process)' if config.CELERY_TASK_ALWAYS_EAGER else config.CELERY_BROKER_URL}")
    logger.info("=" * 50)


# ======================================
# === Argument Parsing ===
# ======================================

def _csv_floats(text):
    return [float(x) for x in text.split(',') if x.strip()]


def _csv_names(text):
    return [x.strip() for x in text.split(',') if x.strip()]


def _panels(text):
    """ "30:3,30:10" -> [[30, 3], [30, 10]] """
    out = []
    for item in _csv_names(text):
        q, d = item.split(':')
        out.append([int(q), int(d)])
    return out


def _points(text):
    """ "0.5:0,1.0:0.2" -> [[0.5, 0.0], [1.0, 0.2]] """
    out = []
    for item in _csv_names(text):
        beta, B = item.split(':')
        out.append([float(beta), float(B)])
    return out


def _json_document(text):
    """ A JSON file path or an inline JSON object. """
    if os.path.isfile(text):
        with open(text, 'r', encoding='utf-8') as fh:
            text = fh.read()
    value = json.loads(text)
    if not isinstance(value, dict):
        raise ValueError(f"Expected a JSON object, got {type(value).__name__}")
    return value


def _add_model_flags(p, with_beta=True):
    p.add_argument('--q', type=int, help="Number of colors")
    p.add_argument('--d', type=int, help="Degree")
    if with_beta:
        p.add_argument('--beta', type=float, help="Coupling")
    p.add_argument('--B', type=float, help="External field on color 1")


def _add_graph_flags(p):
    p.add_argument('--n', type=int, help="Number of vertices of the random regular graph")
    p.add_argument('--model', choices=['CONFIGURATION', 'PERMUTATION'], help="Random regular graph model")
    p.add_argument('--graph-seed', type=int, help="Seed of the graph generator")
    p.add_argument('--graph', help="Read the graph from a text file instead of generating one")


def _add_chain_flags(p):
    p.add_argument('--burnin', type=int, help="Sweeps before the first snapshot")
    p.add_argument('--samples', type=int, help="Snapshots per chain")
    p.add_argument('--thin', type=int, help="Sweeps between snapshots")
    p.add_argument('--chains', type=int, help="Independent chains")


def build_parser():
    parser = argparse.ArgumentParser(prog='cli.py', description="Potts / random-cluster phase diagram on regular trees")
    parser.add_argument('--config', help="Experiment config (JSON document); flags override it")
    parser.add_argument('--seed', type=int, help="Master seed")
    parser.add_argument('--threads', type=int, help="Worker threads for chains and parameter points")
    parser.add_argument('--out-dir', help="Root directory for results")
    parser.add_argument('--list-runs', type=int, nargs='?', const=20, metavar='N',
                        help="Print the N most recent ledger rows and exit")
    sub = parser.add_subparsers(dest='command')

    p = sub.add_parser('gen', help="Generate a random d-regular graph")
    p.add_argument('--n', type=int)
    p.add_argument('--d', type=int)
    p.add_argument('--model', choices=['CONFIGURATION', 'PERMUTATION'])
    p.add_argument('--graph-seed', type=int, help="Generator seed (defaults to --seed)")
    p.add_argument('--out', help="Also write the graph to this path")
    p.add_argument('--t', type=int, help="Radius for the tree-like fraction")

    p = sub.add_parser('phase', help="Critical curves and phase diagram panels")
    p.add_argument('--panels', type=_panels, help="q:d pairs, e.g. 30:3,30:10")
    p.add_argument('--n-points', type=int, help="B grid points per panel")
    p.add_argument('--psi-Bs', type=_csv_floats, help="Fields for the Psi identity on the critical line")
    p.add_argument('--delta', type=float, help="delta of the Lambda_delta gap")
    p.add_argument('--betas', type=_csv_floats, help="Region grid betas (with --Bs)")
    p.add_argument('--Bs', type=_csv_floats, help="Region grid fields (with --betas)")

    p = sub.add_parser('fixedpoint', help="Fixed points, Bethe functional and region at one point")
    _add_model_flags(p)

    p = sub.add_parser('sample', help="Swendsen-Wang chains and estimators")
    _add_model_flags(p)
    _add_graph_flags(p)
    _add_chain_flags(p)
    p.add_argument('--estimators', type=_csv_names, help="Comma-separated estimator names")
    p.add_argument('--initial', choices=['random', 'ordered'])
    p.add_argument('--dump-snapshots', action='store_true', help="Write snapshots.txt (base-36 spins)")
    p.add_argument('--gen-spec', type=_json_document,
                   help="GenSpec as a JSON file or inline object; graph flags override it")
    p.add_argument('--out', help="Also write the estimator reports to this JSON file")

    p = sub.add_parser('lwc', help="Neighborhood laws against the tree references")
    _add_model_flags(p, with_beta=False)
    _add_graph_flags(p)
    _add_chain_flags(p)
    p.add_argument('--t', type=int, help="Neighborhood radius")
    p.add_argument('--points', type=_points, help="beta:B pairs; default two per region")

    p = sub.add_parser('purestate', help="Dominant-color conditioned laws at B=0")
    _add_model_flags(p, with_beta=False)
    _add_graph_flags(p)
    _add_chain_flags(p)
    p.add_argument('--betas', type=_csv_floats)
    p.add_argument('--t', type=int)
    p.add_argument('--ell', type=int, help="Radius of the local dominant color")

    p = sub.add_parser('critical', help="Coexistence check on the critical line")
    _add_model_flags(p, with_beta=False)
    _add_graph_flags(p)
    _add_chain_flags(p)
    p.add_argument('--budget-factor', type=int, help="Multiplier on burn-in and samples")

    p = sub.add_parser('free-energy', help="Thermodynamic integration against the Bethe prediction")
    _add_model_flags(p, with_beta=False)
    _add_graph_flags(p)
    _add_chain_flags(p)
    p.add_argument('--betas', type=_csv_floats)
    p.add_argument('--Bs', type=_csv_floats)
    p.add_argument('--n-grid', type=int, help="Quadrature nodes on [0, beta]")
    p.add_argument('--path-check', action='store_true', help="Also integrate along the field path")

    p = sub.add_parser('oracle', help="Exhaustive oracle suite")
    p.add_argument('--n-graphs', type=int, help="Random tiny graphs to check")

    # Global run flags are also accepted after the subcommand.
    for p in sub.choices.values():
        p.add_argument('--seed', type=int, default=argparse.SUPPRESS, help="Master seed")
        p.add_argument('--threads', type=int, default=argparse.SUPPRESS, help="Worker threads")
        p.add_argument('--out-dir', default=argparse.SUPPRESS, help="Root directory for results")
    return parser


def _drop_none(mapping):
    return {k: v for k, v in mapping.items() if v is not None}


def build_experiment_config(args):
    """ Subcommand defaults, then the --config document, then flags. """
    experiment = args.command.replace('-', '_')
    cfg = ExperimentConfig(experiment=experiment).with_overrides(**EXPERIMENT_DEFAULTS[experiment])
    if args.config:
        with open(args.config, 'r', encoding='utf-8') as fh:
            text = fh.read()
        ExperimentConfig.from_json(text)  # rejects unknown keys
        cfg = cfg.with_overrides(**{k: v for k, v in json.loads(text).items() if k != 'experiment'})
    get = lambda name: getattr(args, name, None)  # noqa: E731

    params = _drop_none({'q': get('q'), 'd': get('d'), 'beta': get('beta'), 'B': get('B')})
    gen = {**(get('gen_spec') or {}),
           **_drop_none({'n': get('n'), 'd': get('d'), 'model': get('model'), 'seed': get('graph_seed')})}
    if experiment == 'gen' and get('graph_seed') is None and args.seed is not None:
        gen['seed'] = args.seed
    extra = _drop_none({
        'graph_path': get('graph'), 'out': get('out'), 't': get('t'), 'panels': get('panels'),
        'n_points': get('n_points'), 'psi_Bs': get('psi_Bs'), 'delta': get('delta'),
        'estimators': get('estimators'), 'initial': get('initial'), 'points': get('points'),
        'ell': get('ell'), 'budget_factor': get('budget_factor'), 'n_grid': get('n_grid'),
        'n_graphs': get('n_graphs'),
        'dump_snapshots': True if get('dump_snapshots') else None,
        'path_check': True if get('path_check') else None,
        'B': get('B') if experiment == 'critical' else None,
    })
    return cfg.with_overrides(
        params=params or None, gen=gen or None, extra=extra or None,
        betas=get('betas'), Bs=get('Bs'),
        burn_in=get('burnin'), n_samples=get('samples'), thin=get('thin'), n_chains=get('chains'),
        master_seed=args.seed, threads=args.threads, out_dir=args.out_dir,
    )


# ======================================
# === Commands ===
# ======================================

def list_runs(limit):
    runs = db.get_recent_runs(limit)
    if not runs:
        print("No runs recorded.")
        return 0
    for r in runs:
        passed = {None: '-', 0: 'FAIL', 1: 'PASS'}.get(r['passed'], '?')
        print(f"{r['id']:>5}  {r['created_at']}  {r['experiment']:<12} {r['status']:<9} {passed:<4} "
              f"{r['config_hash'][:12]}  seed={r['master_seed']}  {r['output_dir'] or ''}")
    return 0


def run_experiment(cfg):
    """ Records the run, executes its task and returns the ledger row. """
    from celery_app import celery_app
    from tasks.experiment_tasks import EXPERIMENT_TASKS

    task = EXPERIMENT_TASKS[cfg.experiment]
    config_json = cfg.to_json()
    run_id = db.add_run(cfg.experiment, config_json, cfg.config_hash(), cfg.master_seed)
    if run_id is None:
        raise RuntimeError("Could not record the run in the ledger")
    logger.info(f"Run {run_id}: {cfg.experiment} (hash {cfg.config_hash()[:12]}, seed {cfg.master_seed})")
    if celery_app.conf.task_always_eager:
        task.apply(args=(run_id, config_json))
    else:
        db.update_run_status(run_id, 'Queued')
        try:
            task.delay(run_id, config_json).get()
        except Exception as e:
            logger.error(f"Run {run_id} did not complete: {e}")
    return db.get_run_by_id(run_id)


def print_outcome(run, checks):
    print(f"Run {run['id']} [{run['experiment']}] status={run['status']}")
    if run['status'] == 'Error':
        print(run['error_message'] or 'Unknown error')
        return
    failed = [c for c in checks if not c['passed']]
    print(f"  checks: {len(checks)} ({len(failed)} failed)")
    for c in failed[:20]:
        print(f"  FAIL {c['check_name']} [{c['instance']}] residual={c['max_residual']}")
    print(f"  output: {run['output_dir']}")
    result = json.loads(run['result_json']) if run['result_json'] else {}
    print(f"  passed: {bool(result.get('passed', run['passed']))}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging()
    Config.check_and_create_dirs()
    try:
        db.init_db()
    except Exception as e:
        logger.critical(f"FATAL: ledger init failed: {e}", exc_info=True)
        return 2

    if args.list_runs is not None:
        return list_runs(args.list_runs)
    if args.command is None:
        parser.print_help()
        return 2

    try:
        cfg = build_experiment_config(args)
    except (ValueError, OSError, json.JSONDecodeError) as e:
        print(f"Invalid configuration: {error_utils.format_error(e, include_traceback=False)}", file=sys.stderr)
        return 2

    run = run_experiment(cfg)
    if run is None:
        return 1
    checks = db.get_checks_for_run(run['id'])
    print_outcome(run, checks)
    return 0 if run['status'] == 'Complete' and run['passed'] == 1 else 1


if __name__ == '__main__':
    sys.exit(main())

# --- END OF FILE: cli.py ---
