import os

from errors import ConfigurationError
from warehouse.base import WarehouseClient
from warehouse.duckdb_client import DuckDBClient
from warehouse.null_client import NullClient

STORES = {
    "duckdb": DuckDBClient,
    "none": NullClient,
}


def get_warehouse_client() -> WarehouseClient:
    """
    The results store RESULTS_STORE names, read at call time so a run can
    switch stores through the environment. DuckDB when unset.
    """
    store = os.getenv("RESULTS_STORE", "duckdb").lower()
    if store not in STORES:
        raise ConfigurationError(
            "RESULTS_STORE", f"unsupported store {store!r}; options: {', '.join(STORES)}"
        )
    return STORES[store]()
