import logging
import os

from warehouse.factory import get_warehouse_client

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def setup_database():
    """
    Creates the result tables in whichever store RESULTS_STORE selects.

    The DDL lives on the clients rather than here, so this script stays a thin
    entry point; the flows also create the tables on every run.
    """
    store = os.getenv("RESULTS_STORE", "duckdb").lower()

    logger.info("Setting up %s tables...", store)

    client = get_warehouse_client()
    client.ensure_tables_exist()

    logger.info("%s setup completed successfully.", store.capitalize())


if __name__ == "__main__":
    setup_database()
