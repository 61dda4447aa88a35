import os
from pathlib import Path

import numpy as np
from dotenv import load_dotenv

from errors import ConfigurationError
from ingest.synthetic import DomainShiftSpec

# Load environment variables
load_dotenv()

# Process-level settings. Everything that shapes an experiment lives in the run
# configuration instead (harness/config.py).
RESULTS_STORE = os.getenv("RESULTS_STORE", "duckdb").lower()  # Options: duckdb, none
RESULTS_DB_PATH = os.getenv("RESULTS_DB_PATH", "data/results.db")
OUTPUT_DIR = Path(os.getenv("OUTPUT_DIR", "data/reports"))
# Caps how many episodes run concurrently. Episodes share only the frozen
# backbone and the target dataset, both read-only.
MAX_WORKERS = max(1, int(os.getenv("PREFECT_MAX_WORKERS", 3)))

# Benchmark presets. The ranges are config data standing in for a near and a
# distant target domain; the sigma entry is the default KL weight for each.
PRESETS = {
    "near": {
        "scale": (0.8, 1.2),
        "shift": (-0.5, 0.5),
        "warp_gamma": 1.0,
        "noise_sigma": 0.0,
        "sigma": 2.0,
    },
    "distant": {
        "scale": (0.25, 4.0),
        "shift": (-2.0, 2.0),
        "warp_gamma": 2.0,
        "noise_sigma": 0.1,
        "sigma": 0.1,
    },
}


def preset_sigma(name: str) -> float:
    return _preset(name)["sigma"]


def preset_shift_spec(name: str, dim: int, seed: int) -> DomainShiftSpec:
    """
    Draws a per-channel DomainShiftSpec from a preset's ranges.

    Args:
        name (str): "near" or "distant".
        dim (int): Channel count of the data the shift applies to.
        seed (int): Same seed, same spec.

    Returns:
        DomainShiftSpec: Scales are drawn log-uniformly, shifts uniformly.
    """
    preset = _preset(name)
    rng = np.random.default_rng(seed)
    low, high = preset["scale"]
    scale = np.exp(rng.uniform(np.log(low), np.log(high), size=dim))
    shift = rng.uniform(*preset["shift"], size=dim)
    return DomainShiftSpec(
        scale=tuple(float(s) for s in scale),
        shift=tuple(float(s) for s in shift),
        warp_gamma=preset["warp_gamma"],
        noise_sigma=preset["noise_sigma"],
        label=name,
    )


def _preset(name: str) -> dict:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            "preset", f"unknown preset {name!r}; options: {', '.join(PRESETS)}"
        ) from None
