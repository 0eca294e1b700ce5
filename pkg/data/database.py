from __future__ import annotations

import os
import sqlite3
from pathlib import Path

OUT_DIR_ENV_VAR = "SUBGRADLAB_OUT_DIR"
LOG_LEVEL_ENV_VAR = "SUBGRADLAB_LOG_LEVEL"
DEFAULT_OUT_DIR = "results"
DB_FILE_NAME = "runs.db"


def resolve_output_dir(configured: str | Path | None = None) -> Path:
    """Explicit directory, else $SUBGRADLAB_OUT_DIR, else ./results; created on demand."""
    if configured:
        out_dir = Path(configured).expanduser()
    elif os.getenv(OUT_DIR_ENV_VAR):
        out_dir = Path(os.environ[OUT_DIR_ENV_VAR]).expanduser()
    else:
        out_dir = Path.cwd() / DEFAULT_OUT_DIR

    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def get_connection(db_path: str | Path) -> sqlite3.Connection:
    path = Path(db_path)
    if str(path) != ":memory:":
        path.parent.mkdir(parents=True, exist_ok=True)
    connection = sqlite3.connect(path)
    connection.row_factory = sqlite3.Row
    return connection


def init_database(connection: sqlite3.Connection) -> None:
    connection.executescript(
        """
        CREATE TABLE IF NOT EXISTS termination_runs(
            id INTEGER PRIMARY KEY,
            experiment TEXT NOT NULL,
            beta REAL NOT NULL,
            run_index INTEGER NOT NULL,
            method TEXT NOT NULL CHECK(method IN ('centralized', 'distributed')),
            iterations INTEGER NOT NULL,
            capped INTEGER NOT NULL DEFAULT 0,
            seed INTEGER NOT NULL,
            UNIQUE(experiment, beta, run_index, method)
        );

        CREATE INDEX IF NOT EXISTS idx_termination_runs_experiment ON termination_runs(experiment, beta);
        """
    )
    connection.commit()
