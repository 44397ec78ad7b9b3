# --- Start of File: database.py ---
import sqlite3
import os
import json
import logging
from contextlib import contextmanager
from config import Config

logger = logging.getLogger(__name__)

RUN_STATUSES = ('Pending', 'Queued', 'Running', 'Complete', 'Error')


def _database_path():
    # Read at call time so tests can point Config at a scratch file.
    return Config.DATABASE_PATH


@contextmanager
def get_db_connection():
    """ Provides a managed database connection (WAL mode, Foreign Keys ON). """
    conn = None
    path = _database_path()
    try:
        db_dir = os.path.dirname(path)
        if db_dir and not os.path.exists(db_dir):
            os.makedirs(db_dir); logger.info(f"Created database directory: {db_dir}")
        conn = sqlite3.connect(path, timeout=15.0)
        conn.execute("PRAGMA journal_mode=WAL;")
        conn.execute("PRAGMA foreign_keys=ON;")
        conn.row_factory = sqlite3.Row
        yield conn
    except sqlite3.Error as e:
        logger.error(f"Database connection or PRAGMA error for '{path}': {e}", exc_info=True); raise
    finally:
        if conn: conn.close()


def init_db():
    """ Creates the run ledger (runs + checks) if missing. """
    logger.info(f"Initializing/Verifying run ledger at '{_database_path()}'...")
    try:
        with get_db_connection() as conn:
            cursor = conn.cursor()

            # === `runs`: one row per CLI invocation ===
            cursor.execute("""
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    experiment TEXT NOT NULL,
                    config_json TEXT NOT NULL,
                    config_hash TEXT NOT NULL,
                    master_seed INTEGER NOT NULL,
                    status TEXT NOT NULL DEFAULT 'Pending'
                        CHECK(status IN ('Pending', 'Queued', 'Running', 'Complete', 'Error')),
                    passed INTEGER,
                    output_dir TEXT,
                    result_json TEXT,
                    error_message TEXT,
                    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                    updated_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
                )
            """)
            logger.debug("`runs` table schema checked/created.")

            # === `checks`: acceptance / oracle rows of a run ===
            cursor.execute("""
                CREATE TABLE IF NOT EXISTS checks (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id INTEGER NOT NULL,
                    check_name TEXT NOT NULL,
                    instance TEXT,
                    max_residual REAL,
                    passed INTEGER NOT NULL,
                    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                    FOREIGN KEY (run_id) REFERENCES runs(id) ON DELETE CASCADE
                )
            """)
            logger.debug("`checks` table schema checked/created.")

            cursor.execute("CREATE INDEX IF NOT EXISTS idx_runs_created_at ON runs (created_at)")
            cursor.execute("CREATE INDEX IF NOT EXISTS idx_runs_config_hash ON runs (config_hash)")
            cursor.execute("CREATE INDEX IF NOT EXISTS idx_checks_run_id ON checks (run_id)")

            cursor.execute('''
                CREATE TRIGGER IF NOT EXISTS trigger_runs_updated_at
                AFTER UPDATE ON runs FOR EACH ROW
                WHEN OLD.updated_at = NEW.updated_at OR OLD.updated_at IS NULL
                BEGIN
                    UPDATE runs SET updated_at = CURRENT_TIMESTAMP WHERE id = OLD.id;
                END;
            ''')
            conn.commit()
            logger.info("Run ledger schema initialization/verification completed successfully.")
    except sqlite3.Error as e:
        logger.critical(f"Run ledger initialization FAILED: {e}", exc_info=True); raise


def dict_from_row(row: sqlite3.Row | None) -> dict | None:
    return dict(row) if row else None


# ======================================
# === Run CRUD Operations ===
# ======================================

def add_run(experiment, config_json, config_hash, master_seed, status='Pending'):
    """ Inserts a run and returns its id, or None on a database error. """
    if status not in RUN_STATUSES:
        logger.error(f"Invalid run status '{status}' for new {experiment} run."); return None
    sql = """
        INSERT INTO runs (experiment, config_json, config_hash, master_seed, status)
        VALUES (?, ?, ?, ?, ?)
    """
    try:
        with get_db_connection() as conn:
            cursor = conn.execute(sql, (experiment, config_json, config_hash, int(master_seed), status))
            new_id = cursor.lastrowid
            conn.commit()
        logger.info(f"Added run ID {new_id}: experiment={experiment}, hash={config_hash[:12]}, seed={master_seed}")
        return new_id
    except sqlite3.Error as e:
        logger.error(f"Error adding {experiment} run to the ledger: {e}", exc_info=True); return None


def update_run_status(run_id, status, error_message=None):
    """ Sets the status; the error message is stored for 'Error' and cleared otherwise. """
    if status not in RUN_STATUSES:
        logger.error(f"Invalid run status '{status}' for run {run_id}."); return False
    sql = "UPDATE runs SET status = ?, error_message = ? WHERE id = ?"
    message = error_message if status == 'Error' else None
    try:
        with get_db_connection() as conn:
            cursor = conn.execute(sql, (status, message, run_id)); conn.commit()
        if cursor.rowcount == 0:
            logger.warning(f"update_run_status: run {run_id} not found."); return False
        logger.info(f"Run {run_id} status -> {status}")
        return True
    except sqlite3.Error as e:
        logger.error(f"Error updating status for run {run_id}: {e}", exc_info=True); return False


def update_run_result(run_id, result, passed, output_dir=None):
    """ Stores the JSON summary and pass flag and marks the run Complete. """
    try:
        result_json = json.dumps(result, sort_keys=True, default=str)
    except (TypeError, ValueError) as e:
        logger.error(f"Result of run {run_id} is not JSON serializable: {e}"); return False
    sql = """
        UPDATE runs SET result_json = ?, passed = ?, output_dir = ?, status = 'Complete', error_message = NULL
        WHERE id = ?
    """
    try:
        with get_db_connection() as conn:
            cursor = conn.execute(sql, (result_json, int(bool(passed)), output_dir, run_id)); conn.commit()
        if cursor.rowcount == 0:
            logger.warning(f"update_run_result: run {run_id} not found."); return False
        logger.info(f"Stored result for run {run_id} (passed={bool(passed)})")
        return True
    except sqlite3.Error as e:
        logger.error(f"Error storing result for run {run_id}: {e}", exc_info=True); return False


def add_checks(run_id, rows):
    """ Bulk-inserts {check_name, instance, max_residual, pass} rows; returns the count or None. """
    sql = "INSERT INTO checks (run_id, check_name, instance, max_residual, passed) VALUES (?, ?, ?, ?, ?)"
    values = [(run_id, r['check_name'], r.get('instance'), r.get('max_residual'), int(bool(r['pass'])))
              for r in rows]
    try:
        with get_db_connection() as conn:
            conn.executemany(sql, values); conn.commit()
        logger.debug(f"Stored {len(values)} checks for run {run_id}")
        return len(values)
    except sqlite3.Error as e:
        logger.error(f"Error storing checks for run {run_id}: {e}", exc_info=True); return None


def add_check(run_id, check_name, instance, max_residual, passed):
    count = add_checks(run_id, [{'check_name': check_name, 'instance': instance,
                                 'max_residual': max_residual, 'pass': passed}])
    return count == 1


def get_run_by_id(run_id):
    try:
        with get_db_connection() as conn:
            row = conn.execute("SELECT * FROM runs WHERE id = ?", (run_id,)).fetchone()
        return dict_from_row(row)
    except sqlite3.Error as e:
        logger.error(f"Error fetching run {run_id}: {e}", exc_info=True); return None


def get_checks_for_run(run_id):
    try:
        with get_db_connection() as conn:
            rows = conn.execute("SELECT * FROM checks WHERE run_id = ? ORDER BY id", (run_id,)).fetchall()
        return [dict(r) for r in rows]
    except sqlite3.Error as e:
        logger.error(f"Error fetching checks for run {run_id}: {e}", exc_info=True); return []


def get_recent_runs(limit=20):
    try:
        with get_db_connection() as conn:
            rows = conn.execute("SELECT * FROM runs ORDER BY id DESC LIMIT ?", (int(limit),)).fetchall()
        return [dict(r) for r in rows]
    except sqlite3.Error as e:
        logger.error(f"Error fetching recent runs: {e}", exc_info=True); return []


def delete_run(run_id):
    """ Deletes a run and (via cascade) its checks. """
    try:
        with get_db_connection() as conn:
            cursor = conn.execute("DELETE FROM runs WHERE id = ?", (run_id,)); conn.commit()
        if cursor.rowcount == 0:
            logger.warning(f"delete_run: run {run_id} not found."); return False
        logger.info(f"Deleted run {run_id}")
        return True
    except sqlite3.Error as e:
        logger.error(f"Error deleting run {run_id}: {e}", exc_info=True); return False

# --- END OF FILE: database.py ---
