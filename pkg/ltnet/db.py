import json
import sqlite3
import threading
import uuid
from datetime import datetime, timezone
from pathlib import Path

from ltnet import config

_local = threading.local()
_db_path: Path | None = None

SCHEMA = """
CREATE TABLE IF NOT EXISTS studies (
    id TEXT PRIMARY KEY,
    kind TEXT NOT NULL,
    master_seed INTEGER NOT NULL,
    config_json TEXT NOT NULL DEFAULT '{}',
    status TEXT NOT NULL DEFAULT 'running',
    summary_json TEXT,
    error_message TEXT,
    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
    finished_at TIMESTAMP
);

CREATE TABLE IF NOT EXISTS study_records (
    study_id TEXT NOT NULL,
    idx INTEGER NOT NULL,
    seed INTEGER,
    eta REAL,
    lose INTEGER,
    marginal INTEGER DEFAULT 0,
    chi_reg REAL,
    chi_pp REAL,
    log_chi_osc REAL,
    error TEXT,
    PRIMARY KEY (study_id, idx, eta),
    FOREIGN KEY (study_id) REFERENCES studies(id)
);
"""


def _path() -> Path:
    return _db_path or config.DB_PATH


def _get_connection() -> sqlite3.Connection:
    """Get a thread-local SQLite connection for the current database path."""
    path = _path()
    conn = getattr(_local, "conn", None)
    if conn is None or getattr(_local, "path", None) != path:
        if conn is not None:
            conn.close()
        path.parent.mkdir(parents=True, exist_ok=True)
        conn = sqlite3.connect(str(path), timeout=30)
        conn.row_factory = sqlite3.Row
        conn.execute("PRAGMA journal_mode=WAL")
        _local.conn = conn
        _local.path = path
    return conn


def init_db(path: Path | str | None = None):
    """Initialize the database schema, optionally switching to another file."""
    global _db_path
    if path is not None:
        _db_path = Path(path)
    conn = _get_connection()
    conn.executescript(SCHEMA)
    _migrate_add_column(conn, "study_records", "runtime_ms", "REAL")
    conn.commit()


def _migrate_add_column(conn: sqlite3.Connection, table: str, column: str, col_type: str):
    """Add a column to a table if it doesn't exist."""
    try:
        conn.execute(f"SELECT {column} FROM {table} LIMIT 1")
    except sqlite3.OperationalError:
        conn.execute(f"ALTER TABLE {table} ADD COLUMN {column} {col_type}")
        conn.commit()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


# === Study CRUD ===


def create_study(kind: str, master_seed: int, config_json: str) -> str:
    study_id = uuid.uuid4().hex[:12]
    conn = _get_connection()
    conn.execute(
        """INSERT INTO studies (id, kind, master_seed, config_json, status, created_at)
           VALUES (?, ?, ?, ?, 'running', ?)""",
        (study_id, kind, master_seed, config_json, _now()),
    )
    conn.commit()
    return study_id


def finish_study(study_id: str, summary: dict):
    conn = _get_connection()
    conn.execute(
        "UPDATE studies SET status = 'finished', summary_json = ?, finished_at = ? WHERE id = ?",
        (json.dumps(summary), _now(), study_id),
    )
    conn.commit()


def fail_study(study_id: str, error_message: str):
    conn = _get_connection()
    conn.execute(
        "UPDATE studies SET status = 'failed', error_message = ?, finished_at = ? WHERE id = ?",
        (error_message, _now(), study_id),
    )
    conn.commit()


def get_study(study_id: str) -> dict | None:
    conn = _get_connection()
    row = conn.execute("SELECT * FROM studies WHERE id = ?", (study_id,)).fetchone()
    if not row:
        return None
    study = dict(row)
    study["summary"] = json.loads(study.pop("summary_json") or "null")
    study["config"] = json.loads(study.pop("config_json") or "{}")
    return study


def list_studies(kind: str | None = None, limit: int = 50) -> list[dict]:
    conn = _get_connection()
    if kind:
        rows = conn.execute(
            "SELECT id, kind, master_seed, status, created_at, finished_at FROM studies WHERE kind = ? ORDER BY created_at DESC LIMIT ?",
            (kind, limit),
        ).fetchall()
    else:
        rows = conn.execute(
            "SELECT id, kind, master_seed, status, created_at, finished_at FROM studies ORDER BY created_at DESC LIMIT ?",
            (limit,),
        ).fetchall()
    return [dict(r) for r in rows]


# === Record CRUD ===


def insert_records(study_id: str, records: list[dict]):
    """Insert per-network rows; keys follow the study_records columns."""
    conn = _get_connection()
    conn.executemany(
        """INSERT OR REPLACE INTO study_records
           (study_id, idx, seed, eta, lose, marginal, chi_reg, chi_pp, log_chi_osc, error, runtime_ms)
           VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)""",
        [
            (
                study_id,
                r["index"],
                r.get("seed"),
                r.get("eta", 0.0),
                None if r.get("lose") is None else int(r["lose"]),
                int(bool(r.get("marginal", False))),
                r.get("chi_reg"),
                r.get("chi_pp"),
                r.get("log_chi_osc"),
                r.get("error"),
                r.get("runtime_ms"),
            )
            for r in records
        ],
    )
    conn.commit()


def get_records(study_id: str, limit: int = 1000, offset: int = 0) -> list[dict]:
    conn = _get_connection()
    rows = conn.execute(
        "SELECT * FROM study_records WHERE study_id = ? ORDER BY eta, idx LIMIT ? OFFSET ?",
        (study_id, limit, offset),
    ).fetchall()
    return [dict(r) for r in rows]


def count_records(study_id: str) -> int:
    conn = _get_connection()
    row = conn.execute("SELECT COUNT(*) AS n FROM study_records WHERE study_id = ?", (study_id,)).fetchone()
    return row["n"]
