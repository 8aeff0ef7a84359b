import json
import os
import sqlite3
from datetime import datetime
from typing import Any, Dict, List, Optional

from utils.logger import setup_logger

logger = setup_logger(__name__)

DB_FILE = os.path.join("runs", "ledger.db")


def get_db_connection(db_path: Optional[str] = None):
    path = db_path or DB_FILE
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    conn = sqlite3.connect(path)
    conn.row_factory = sqlite3.Row
    return conn


def init_db(db_path: Optional[str] = None):
    conn = get_db_connection(db_path)
    c = conn.cursor()

    # One row per experiment run
    c.execute('''
        CREATE TABLE IF NOT EXISTS runs (
            run_id TEXT PRIMARY KEY,
            name TEXT,
            kind TEXT,
            config_hash TEXT,
            config_json TEXT,
            out_dir TEXT,
            status TEXT,
            exit_code INTEGER,
            noise_floor REAL,
            wall_time REAL,
            checks TEXT,
            error TEXT,
            created_at TIMESTAMP
        )
    ''')

    # Artifacts written by a run, with their digests
    c.execute('''
        CREATE TABLE IF NOT EXISTS run_outputs (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            run_id TEXT,
            name TEXT,
            path TEXT,
            sha256 TEXT,
            FOREIGN KEY (run_id) REFERENCES runs (run_id)
        )
    ''')
    c.execute('CREATE INDEX IF NOT EXISTS idx_runs_config ON runs (config_hash, created_at)')

    conn.commit()
    conn.close()


def save_run(run_data: Dict[str, Any], db_path: Optional[str] = None) -> bool:
    conn = get_db_connection(db_path)
    c = conn.cursor()

    try:
        c.execute('''
            INSERT OR REPLACE INTO runs (
                run_id, name, kind, config_hash, config_json, out_dir, status,
                exit_code, noise_floor, wall_time, checks, error, created_at
            ) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
        ''', (
            run_data.get('run_id'),
            run_data.get('name'),
            run_data.get('kind'),
            run_data.get('config_hash'),
            run_data.get('config_json'),
            run_data.get('out_dir'),
            run_data.get('status'),
            run_data.get('exit_code', 0),
            run_data.get('noise_floor'),
            run_data.get('wall_time'),
            json.dumps(run_data.get('checks', [])),
            run_data.get('error'),
            run_data.get('created_at', datetime.now().isoformat()),
        ))
        conn.commit()
        return True
    except sqlite3.Error as e:
        logger.error(f"Error saving run {run_data.get('run_id')}: {e}")
        return False
    finally:
        conn.close()


def add_output(run_id: str, name: str, path: str, sha256: str, db_path: Optional[str] = None) -> bool:
    conn = get_db_connection(db_path)
    c = conn.cursor()

    try:
        c.execute(
            'INSERT INTO run_outputs (run_id, name, path, sha256) VALUES (?, ?, ?, ?)',
            (run_id, name, path, sha256),
        )
        conn.commit()
        return True
    except sqlite3.Error as e:
        logger.error(f"Error adding output {name} for run {run_id}: {e}")
        return False
    finally:
        conn.close()


def get_run(run_id: str, db_path: Optional[str] = None) -> Optional[Dict[str, Any]]:
    conn = get_db_connection(db_path)
    c = conn.cursor()
    run = c.execute('SELECT * FROM runs WHERE run_id = ?', (run_id,)).fetchone()
    outputs = c.execute('SELECT name, path, sha256 FROM run_outputs WHERE run_id = ? ORDER BY name',
                        (run_id,)).fetchall()
    conn.close()
    if not run:
        return None
    result = dict(run)
    result['checks'] = json.loads(result['checks'] or '[]')
    result['outputs'] = [dict(o) for o in outputs]
    return result


def get_runs_for_config(config_hash: str, db_path: Optional[str] = None) -> List[Dict[str, Any]]:
    conn = get_db_connection(db_path)
    c = conn.cursor()
    runs = c.execute('SELECT * FROM runs WHERE config_hash = ? ORDER BY created_at DESC',
                     (config_hash,)).fetchall()
    conn.close()
    return [dict(r) for r in runs]


def get_recent_runs(limit: int = 20, db_path: Optional[str] = None) -> List[Dict[str, Any]]:
    conn = get_db_connection(db_path)
    c = conn.cursor()
    runs = c.execute(
        'SELECT run_id, name, kind, status, exit_code, noise_floor, wall_time, created_at '
        'FROM runs ORDER BY created_at DESC LIMIT ?',
        (limit,),
    ).fetchall()
    conn.close()
    return [dict(r) for r in runs]


def previous_digests(config_hash: str, exclude_run_id: Optional[str] = None,
                     db_path: Optional[str] = None) -> Dict[str, str]:
    """Output digests of the latest successful run with this config hash, keyed by artifact name."""
    conn = get_db_connection(db_path)
    c = conn.cursor()
    row = c.execute(
        """SELECT run_id FROM runs
           WHERE config_hash = ? AND status = 'completed' AND run_id != ?
           ORDER BY created_at DESC LIMIT 1""",
        (config_hash, exclude_run_id or ''),
    ).fetchone()
    if row is None:
        conn.close()
        return {}
    outputs = c.execute('SELECT name, sha256 FROM run_outputs WHERE run_id = ?', (row['run_id'],)).fetchall()
    conn.close()
    return {o['name']: o['sha256'] for o in outputs}
