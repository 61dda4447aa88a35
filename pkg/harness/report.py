"""
Aggregation of episode results into run reports.

A report is a versioned JSON document plus a per-episode CSV. Everything in
the JSON except the `timestamp` field is a pure function of the config and the
episode results, so two runs of the same config can be compared byte for byte
once that field is dropped.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from harness.config import RunConfig
from training.episode import EpisodeResult
from validators import ComparisonSchema, EpisodeResultSchema

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
NORMAL_QUANTILE_95 = 1.96


@dataclass(frozen=True)
class Interval:
    mean: float
    ci95: float
    degenerate: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {"mean": self.mean, "ci95": self.ci95, "degenerate": self.degenerate}


def confidence_interval(values) -> Interval:
    """
    Mean and 1.96 * s / sqrt(n) with the sample standard deviation. A single
    value gives ci95 = 0 and is flagged degenerate.
    """
    series = pd.Series(values, dtype="float64")
    if series.empty:
        raise ValueError("confidence interval of an empty sample")
    if len(series) == 1:
        return Interval(mean=float(series.iloc[0]), ci95=0.0, degenerate=True)
    spread = float(series.std(ddof=1))
    return Interval(mean=float(series.mean()), ci95=NORMAL_QUANTILE_95 * spread / math.sqrt(len(series)))


def run_id_for(config: RunConfig) -> str:
    """Stable across runs: a digest of the config snapshot."""
    payload = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def _mean_last(traces: list[list[float]]) -> float | None:
    finals = [trace[-1] for trace in traces if trace]
    return float(np.mean(finals)) if finals else None


@dataclass
class RunReport:
    run_id: str
    label: str
    config: RunConfig
    results: list[EpisodeResult]
    created_at: str = ""
    wall_clock_seconds: float = 0.0
    format_version: int = FORMAT_VERSION
    _accuracy: Interval | None = field(default=None, init=False, repr=False)

    @property
    def episode_count(self) -> int:
        return len(self.results)

    @property
    def accuracy(self) -> Interval:
        if self._accuracy is None:
            self._accuracy = confidence_interval([r.accuracy for r in self.results])
        return self._accuracy

    @property
    def accuracy_lp(self) -> Interval | None:
        values = [r.accuracy_lp for r in self.results if r.accuracy_lp is not None]
        return confidence_interval(values) if values else None

    @property
    def extra_accuracy(self) -> Interval | None:
        values = [r.extra_accuracy for r in self.results if r.extra_accuracy is not None]
        return confidence_interval(values) if values else None

    @property
    def max_shift(self) -> float | None:
        """The largest step-to-step prediction shift seen in any episode."""
        shifts = [r.max_shift for r in self.results if r.max_shift is not None]
        return max(shifts) if shifts else None

    def traces_summary(self) -> dict[str, Any]:
        group_sizes = [size for r in self.results for size in r.group_sizes]
        return {
            "final_ce_mean": _mean_last([r.ce_trace for r in self.results]),
            "final_external_loss_mean": _mean_last([r.external_trace for r in self.results]),
            "final_mi_mean": _mean_last([r.mi_trace for r in self.results]),
            "final_kl_mean": _mean_last([r.kl_trace for r in self.results]),
            "mean_group_size": float(np.mean(group_sizes)) if group_sizes else None,
            "fallback_steps": sum(len(r.fallback_steps) for r in self.results),
        }

    def to_dict(self) -> dict[str, Any]:
        lp = self.accuracy_lp
        extra = self.extra_accuracy
        return {
            "format_version": self.format_version,
            "run_id": self.run_id,
            "label": self.label,
            "ablation": self.config.ablation,
            "episode_count": self.episode_count,
            "accuracy": self.accuracy.to_dict(),
            "accuracy_lp": None if lp is None else lp.to_dict(),
            "extra_accuracy": None if extra is None else extra.to_dict(),
            "per_episode": [
                {
                    "episode_idx": r.episode_index,
                    "episode_hash": r.episode_hash,
                    "accuracy": r.accuracy,
                    "accuracy_lp": r.accuracy_lp,
                    "extra_accuracy": r.extra_accuracy,
                }
                for r in self.results
            ],
            "traces": self.traces_summary(),
            "max_shift": self.max_shift,
            "config": self.config.to_dict(),
            "timestamp": {
                "created_at": self.created_at,
                "wall_clock_seconds": self.wall_clock_seconds,
            },
        }


def build_report(
    config: RunConfig,
    results: list[EpisodeResult],
    wall_clock_seconds: float = 0.0,
    label: str | None = None,
) -> RunReport:
    """Results must already be in episode-index order."""
    indices = [r.episode_index for r in results]
    if indices != sorted(indices):
        raise ValueError("episode results must be ordered by episode index")
    return RunReport(
        run_id=run_id_for(config),
        label=label or config.ablation,
        config=config,
        results=list(results),
        created_at=datetime.now(timezone.utc).isoformat(),
        wall_clock_seconds=wall_clock_seconds,
    )


def results_frame(report: RunReport) -> pd.DataFrame:
    frame = pd.DataFrame(
        {
            "run_id": [report.run_id] * report.episode_count,
            "ablation": [report.config.ablation] * report.episode_count,
            "episode_idx": [r.episode_index for r in report.results],
            "episode_hash": [r.episode_hash for r in report.results],
            "accuracy": [r.accuracy for r in report.results],
            "accuracy_lp": pd.Series([r.accuracy_lp for r in report.results], dtype="float64"),
            "extra_accuracy": pd.Series([r.extra_accuracy for r in report.results], dtype="float64"),
            "max_shift": pd.Series([r.max_shift for r in report.results], dtype="float64"),
        }
    )
    return EpisodeResultSchema.validate(frame, lazy=True)


def comparison_frame(reports: list[RunReport]) -> pd.DataFrame:
    """One row per report: mean and ci95 with and without label propagation."""
    rows = []
    for report in reports:
        lp = report.accuracy_lp
        rows.append(
            {
                "label": report.label,
                "ablation": report.config.ablation,
                "episodes": report.episode_count,
                "mean": report.accuracy.mean,
                "ci95": report.accuracy.ci95,
                "mean_lp": None if lp is None else lp.mean,
                "ci95_lp": None if lp is None else lp.ci95,
            }
        )
    frame = pd.DataFrame(rows, columns=list(ComparisonSchema.columns))
    frame["mean_lp"] = frame["mean_lp"].astype("float64")
    frame["ci95_lp"] = frame["ci95_lp"].astype("float64")
    return ComparisonSchema.validate(frame, lazy=True)


def write_report(report: RunReport, directory: str | Path) -> Path:
    """Writes <label>.json and <label>_episodes.csv; returns the JSON path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    json_path = directory / f"{report.label}.json"
    json_path.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    results_frame(report).to_csv(directory / f"{report.label}_episodes.csv", index=False)
    logger.info(
        "Wrote %s: accuracy %.4f +- %.4f over %d episodes",
        json_path,
        report.accuracy.mean,
        report.accuracy.ci95,
        report.episode_count,
    )
    return json_path


def write_comparison(frame: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path
