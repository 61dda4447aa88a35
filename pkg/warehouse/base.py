from typing import Protocol

import pandas as pd


class WarehouseClient(Protocol):
    """
    Blueprint that every results store must follow, so the flows can persist
    episode results to DuckDB or skip persistence through one interface.
    """

    def ensure_tables_exist(self) -> None:
        """
        Creates EPISODE_RESULTS and RUN_ERRORS if they are not already there.
        Must be idempotent: the flows call it on every run.
        """
        ...

    def load_results(self, frame: pd.DataFrame, overwrite: bool = True) -> None:
        """
        Saves a validated episode-result frame. With overwrite, rows already
        stored for the same (RUN_ID, ABLATION) are replaced.
        """
        ...

    def log_run_error(
        self,
        run_id: str,
        episode_idx: int,
        error_type: str,
        error_message: str,
        stack_trace: str | None = None,
    ) -> None:
        """Saves a failed episode's details to debug later."""
        ...
