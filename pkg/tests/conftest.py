import os
import tempfile
from pathlib import Path

# Point Prefect at a throwaway home before it is imported, so the suite never
# reads or migrates the developer's own ~/.prefect/prefect.db. Running the tests
# under a newer Prefect than the one installed locally will otherwise upgrade
# that shared database in place, after which the older Prefect cannot start its
# ephemeral server at all.
_PREFECT_HOME = Path(tempfile.gettempdir()) / "stepspt-prefect-test-home"
_PREFECT_HOME.mkdir(parents=True, exist_ok=True)
os.environ.setdefault("PREFECT_HOME", str(_PREFECT_HOME))

import numpy as np  # noqa: E402
import pytest  # noqa: E402
from prefect.settings import (  # noqa: E402
    PREFECT_API_KEY,
    PREFECT_API_URL,
    PREFECT_SERVER_ALLOW_EPHEMERAL_MODE,
    temporary_settings,
)

from engine.tape import Tensor  # noqa: E402
from harness.config import RunConfig  # noqa: E402
from ingest.episodes import sample_episode  # noqa: E402
from ingest.synthetic import generate_source_dataset  # noqa: E402
from model.backbone import DenseLayer, FrozenBackbone  # noqa: E402


@pytest.fixture(autouse=True)
def prefect_test_fixture():
    """
    Configure Prefect to use ephemeral test mode.
    This prevents tests from trying to contact a running API server.
    """
    with temporary_settings(
        {
            PREFECT_API_URL: None,
            PREFECT_API_KEY: None,
            PREFECT_SERVER_ALLOW_EPHEMERAL_MODE: True,
        }
    ):
        yield


@pytest.fixture
def small_config():
    """A desk-sized run: 3-way 2-shot episodes over 4 channels, a few steps each."""
    return RunConfig(
        seed=7,
        episodes=3,
        way=3,
        shot=2,
        query_per_class=4,
        source_classes=4,
        target_classes=4,
        dim=4,
        source_per_class=20,
        target_per_class=10,
        hidden_widths=(8,),
        pretrain_epochs=3,
        pretrain_batch_size=20,
        steps=2,
        max_epochs=4,
        track_shift=True,
        lp_neighbors=3,
    )


@pytest.fixture
def target_dataset():
    return generate_source_dataset(
        class_count=4, dim=4, per_class=10, cluster_spread=0.3, seed=11, class_offset=4
    )


@pytest.fixture
def smooth_backbone():
    """
    One 4 -> 6 layer with a large positive bias, so every ReLU stays active on
    moderate inputs and finite differences never cross a kink.
    """
    rng = np.random.default_rng(3)
    layer = DenseLayer(weight=Tensor(rng.normal(scale=0.5, size=(4, 6))), bias=Tensor(np.full(6, 10.0)))
    return FrozenBackbone((layer,))


@pytest.fixture
def episode(target_dataset):
    return sample_episode(target_dataset, way=3, shot=2, query_per_class=4, seed=(7, 0))
