"""
Persistence layer for experiment results using SQLite.

This module provides database connection management and schema creation.
"""

import logging
import sqlite3
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

logger = logging.getLogger(__name__)


def default_db_path() -> str:
    """Return ~/.ronmf/results.db, creating the directory if needed."""
    db_dir = Path.home() / '.ronmf'
    db_dir.mkdir(exist_ok=True)
    return str(db_dir / 'results.db')


class Database:
    """
    SQLite database holding experiments and their repetitions.

    Handles connection management, schema creation, and transaction handling.
    """

    def __init__(self, db_path: Optional[str] = None):
        """
        Initialize the database connection.

        Args:
            db_path: Path to the SQLite database file, or ':memory:'. If None,
                uses ~/.ronmf/results.db.
        """
        self.db_path = db_path if db_path is not None else default_db_path()
        self._connection: Optional[sqlite3.Connection] = None
        self._init_schema()

    def _get_connection(self) -> sqlite3.Connection:
        """Get or create a database connection."""
        if self._connection is None:
            self._connection = sqlite3.connect(self.db_path)
            self._connection.row_factory = sqlite3.Row
            self._connection.execute("PRAGMA foreign_keys = ON")
            logger.debug("opened results database %s", self.db_path)
        return self._connection

    @contextmanager
    def get_cursor(self):
        """
        Context manager for a cursor with automatic commit/rollback.

        Yields:
            sqlite3.Cursor: Database cursor for executing queries
        """
        conn = self._get_connection()
        cursor = conn.cursor()
        try:
            yield cursor
            conn.commit()
        except Exception:
            conn.rollback()
            raise

    def _init_schema(self):
        """Initialize the database schema."""
        with self.get_cursor() as cursor:
            cursor.execute("""
                CREATE TABLE IF NOT EXISTS experiments (
                    id TEXT PRIMARY KEY,
                    name TEXT NOT NULL,
                    config_json TEXT NOT NULL,
                    library_version TEXT NOT NULL,
                    created_at TEXT NOT NULL
                )
            """)

            # one row per method and repetition; seconds is wall time
            cursor.execute("""
                CREATE TABLE IF NOT EXISTS repetitions (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    experiment_id TEXT NOT NULL,
                    repetition INTEGER NOT NULL,
                    seed INTEGER NOT NULL,
                    method TEXT NOT NULL,
                    acc REAL,
                    f1 REAL,
                    nmi REAL,
                    pur REAL,
                    confusion_json TEXT,
                    iterations INTEGER NOT NULL,
                    feasibility REAL,
                    seconds REAL NOT NULL,
                    FOREIGN KEY (experiment_id) REFERENCES experiments(id) ON DELETE CASCADE,
                    UNIQUE(experiment_id, method, repetition)
                )
            """)

            cursor.execute("""
                CREATE INDEX IF NOT EXISTS idx_repetitions_experiment_id
                ON repetitions(experiment_id)
            """)

    def close(self):
        """Close the database connection."""
        if self._connection:
            self._connection.close()
            self._connection = None

    def __enter__(self):
        """Context manager entry."""
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        """Context manager exit with automatic cleanup."""
        self.close()
