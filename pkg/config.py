# --- Start of File: config.py ---
import os
import json
import hashlib
import logging
from dataclasses import dataclass, field, asdict, fields
from dotenv import load_dotenv

dotenv_path = os.path.join(os.path.dirname(__file__), '.env')
if os.path.exists(dotenv_path):
    load_dotenv(dotenv_path)


def _env_bool(name, default):
    raw = os.environ.get(name)
    if raw is None:
        return default
    return raw.strip().lower() in ('1', 'true', 'yes', 'on')


class Config:
    """ Application Configuration Class """

    # --- Application Paths ---
    APP_ROOT = os.path.dirname(os.path.abspath(__file__))
    INSTANCE_FOLDER_PATH = os.environ.get('INSTANCE_FOLDER_PATH', os.path.join(APP_ROOT, 'instance'))
    DATABASE_PATH = os.environ.get('DATABASE_PATH', os.path.join(INSTANCE_FOLDER_PATH, 'runs.db'))
    RESULTS_DIR = os.environ.get('RESULTS_DIR', os.path.join(APP_ROOT, 'results'))

    # --- Logging Settings ---
    LOG_FILE_PATH = os.environ.get('LOG_FILE_PATH', os.path.join(INSTANCE_FOLDER_PATH, 'potts.log'))
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO').upper()

    # --- Celery / Background Task Settings ---
    # Eager by default: chains run in-process unless a broker is configured.
    CELERY_BROKER_URL = os.environ.get('CELERY_BROKER_URL', 'redis://localhost:6379/0')
    CELERY_RESULT_BACKEND = os.environ.get('CELERY_RESULT_BACKEND', 'redis://localhost:6379/1')
    CELERY_TASK_ALWAYS_EAGER = _env_bool('CELERY_TASK_ALWAYS_EAGER', True)
    CELERY_TASK_EAGER_PROPAGATES = _env_bool('CELERY_TASK_EAGER_PROPAGATES', True)
    DEFAULT_THREADS = int(os.environ.get('DEFAULT_THREADS', 1))

    # --- Table / Enumeration Caps ---
    NEIGHBORHOOD_TABLE_CAP = int(os.environ.get('NEIGHBORHOOD_TABLE_CAP', 2 ** 24))
    ENUMERATION_CAP = int(os.environ.get('ENUMERATION_CAP', 2 ** 26))

    # --- Numerical Tolerances ---
    FIXED_POINT_TOL = float(os.environ.get('FIXED_POINT_TOL', 1e-12))
    FIXED_POINT_MAX_ITER = int(os.environ.get('FIXED_POINT_MAX_ITER', 200000))
    CRITICAL_TOL = float(os.environ.get('CRITICAL_TOL', 1e-9))
    CURVE_TOL = float(os.environ.get('CURVE_TOL', 1e-10))
    FLOW_SLACK = float(os.environ.get('FLOW_SLACK', 1e-10))

    # --- Chain Budgets ---
    BURN_IN = int(os.environ.get('BURN_IN', 1000))
    THIN = int(os.environ.get('THIN', 10))
    N_SAMPLES = int(os.environ.get('N_SAMPLES', 400))
    N_BATCHES = int(os.environ.get('N_BATCHES', 20))

    # --- Graph Generation ---
    GEN_RETRY_BUDGET = int(os.environ.get('GEN_RETRY_BUDGET', 1000))

    # --- Output ---
    CSV_SIGNIFICANT_DIGITS = int(os.environ.get('CSV_SIGNIFICANT_DIGITS', 17))

    # --- Static Method for Directory Creation ---
    @staticmethod
    def check_and_create_dirs():
        logger = logging.getLogger(__name__)
        dirs_to_create = [
            Config.INSTANCE_FOLDER_PATH,
            Config.RESULTS_DIR,
            os.path.dirname(Config.DATABASE_PATH),
            os.path.dirname(Config.LOG_FILE_PATH)
        ]
        logger.info("Checking/Creating necessary directories...")
        for dir_path in dirs_to_create:
            if dir_path and not os.path.exists(dir_path):
                try:
                    os.makedirs(dir_path, exist_ok=True)
                    logger.info(f" -> Created directory: {dir_path}")
                except OSError as e:
                    logger.error(f" -> Failed to create directory {dir_path}: {e}. Check permissions.")


def get_config():
    return Config()


# =============================================================================
# === Experiment Configuration (JSON document, CLI-overridable) ===
# =============================================================================

@dataclass
class ExperimentConfig:
    """
    Everything a run depends on. Outputs are a pure function of this object,
    so its canonical JSON form and hash are stored alongside every result.

    `params` holds scalar model parameters (q, d, beta, B); list-valued entries
    such as `betas` / `Bs` describe parameter grids. `gen` mirrors GenSpec
    fields. `extra` carries experiment-specific knobs (points per region,
    ell, delta, ...).
    """
    experiment: str = 'oracle'
    params: dict = field(default_factory=lambda: {'q': 3, 'd': 3, 'beta': 1.0, 'B': 0.0})
    betas: list = field(default_factory=list)
    Bs: list = field(default_factory=list)
    gen: dict = field(default_factory=lambda: {'n': 10000, 'd': 3, 'model': 'CONFIGURATION', 'seed': 0})
    burn_in: int = Config.BURN_IN
    n_samples: int = Config.N_SAMPLES
    thin: int = Config.THIN
    n_chains: int = 1
    threads: int = Config.DEFAULT_THREADS
    master_seed: int = 0
    out_dir: str = Config.RESULTS_DIR
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        if not isinstance(raw, dict):
            raise ValueError("Experiment config must be a JSON object.")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValueError(f"Unknown experiment config keys: {unknown}")
        return cls(**raw)

    @classmethod
    def from_file(cls, path):
        with open(path, 'r', encoding='utf-8') as fh:
            return cls.from_json(fh.read())

    def to_json(self, indent=None):
        return json.dumps(asdict(self), sort_keys=True, indent=indent)

    def config_hash(self):
        # out_dir and threads do not change results
        payload = asdict(self)
        payload.pop('out_dir', None)
        payload.pop('threads', None)
        canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def with_overrides(self, **overrides):
        """ Returns a copy with non-None overrides applied; dict fields are merged. """
        data = asdict(self)
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in data:
                raise ValueError(f"Unknown override '{key}'.")
            if isinstance(data[key], dict) and isinstance(value, dict):
                data[key] = {**data[key], **value}
            else:
                data[key] = value
        return ExperimentConfig(**data)

# --- END OF FILE: config.py ---
