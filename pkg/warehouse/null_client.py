import logging

import pandas as pd

from warehouse.base import WarehouseClient

logger = logging.getLogger(__name__)


class NullClient(WarehouseClient):
    """Persists nothing. Selected with RESULTS_STORE=none; reports still go to disk."""

    def ensure_tables_exist(self) -> None:
        pass

    def load_results(self, frame: pd.DataFrame, overwrite: bool = True) -> None:
        logger.debug("Results store disabled; dropping %d rows", len(frame))

    def log_run_error(
        self,
        run_id: str,
        episode_idx: int,
        error_type: str,
        error_message: str,
        stack_trace: str | None = None,
    ) -> None:
        logger.debug("Results store disabled; episode %d failed with %s", episode_idx, error_type)
