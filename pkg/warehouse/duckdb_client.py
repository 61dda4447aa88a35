from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

import duckdb
import pandas as pd

from warehouse.base import WarehouseClient

RESULT_COLUMNS = [
    "RUN_ID",
    "ABLATION",
    "EPISODE_IDX",
    "EPISODE_HASH",
    "ACCURACY",
    "ACCURACY_LP",
    "EXTRA_ACCURACY",
]

EPISODE_RESULTS_DDL = """
    CREATE TABLE IF NOT EXISTS EPISODE_RESULTS (
        RUN_ID VARCHAR,
        ABLATION VARCHAR,
        EPISODE_IDX INTEGER,
        EPISODE_HASH VARCHAR,
        ACCURACY DOUBLE,
        ACCURACY_LP DOUBLE,
        EXTRA_ACCURACY DOUBLE,
        LOADED_AT TIMESTAMP DEFAULT CURRENT_TIMESTAMP
    )
"""

RUN_ERRORS_DDL = """
    CREATE TABLE IF NOT EXISTS RUN_ERRORS (
        ERROR_ID UUID DEFAULT uuid(),
        RUN_ID VARCHAR,
        EPISODE_IDX INTEGER,
        ERROR_TYPE VARCHAR,
        ERROR_MESSAGE VARCHAR,
        STACK_TRACE VARCHAR,
        OCCURRED_AT TIMESTAMP DEFAULT CURRENT_TIMESTAMP
    )
"""


class DuckDBClient(WarehouseClient):
    """Episode results in a local DuckDB file (RESULTS_STORE=duckdb)."""

    def __init__(self, db_path: str | None = None):
        if db_path is None:
            from ingest.config import RESULTS_DB_PATH

            db_path = RESULTS_DB_PATH
        self.db_path = db_path
        Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
        self.ensure_tables_exist()

    @contextmanager
    def _connect(self) -> Iterator[duckdb.DuckDBPyConnection]:
        connection = duckdb.connect(self.db_path)
        try:
            yield connection
        finally:
            connection.close()

    def ensure_tables_exist(self) -> None:
        with self._connect() as connection:
            connection.execute(EPISODE_RESULTS_DDL)
            connection.execute(RUN_ERRORS_DDL)

    def load_results(self, frame: pd.DataFrame, overwrite: bool = True) -> None:
        """
        Inserts one row per episode. With overwrite, the earlier rows of each
        (RUN_ID, ABLATION) in the frame go first, in the same transaction.
        """
        if frame.empty:
            return
        staged = frame.rename(columns=str.upper)[RESULT_COLUMNS]
        keys = list(staged[["RUN_ID", "ABLATION"]].drop_duplicates().itertuples(index=False))
        columns = ", ".join(RESULT_COLUMNS)

        with self._connect() as connection:
            connection.register("staged_results", staged)
            connection.begin()
            try:
                if overwrite:
                    connection.executemany(
                        "DELETE FROM EPISODE_RESULTS WHERE RUN_ID = ? AND ABLATION = ?",
                        [tuple(key) for key in keys],
                    )
                connection.execute(
                    f"INSERT INTO EPISODE_RESULTS ({columns}) SELECT {columns} FROM staged_results"
                )
                connection.commit()
            except Exception:
                connection.rollback()
                raise

    def log_run_error(
        self,
        run_id: str,
        episode_idx: int,
        error_type: str,
        error_message: str,
        stack_trace: str | None = None,
    ) -> None:
        with self._connect() as connection:
            connection.execute(
                "INSERT INTO RUN_ERRORS (RUN_ID, EPISODE_IDX, ERROR_TYPE, ERROR_MESSAGE, STACK_TRACE) "
                "VALUES (?, ?, ?, ?, ?)",
                (run_id, episode_idx, error_type, error_message, stack_trace),
            )
