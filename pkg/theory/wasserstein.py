"""
Empirical Wasserstein-infinity (bottleneck) distances between equal-size
point sets, and the per-class shift between two steps' prediction sets.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.spatial.distance import cdist

from alignment.credible import PredictionSet
from errors import ContractError

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

BOTTLENECK_CAP = 64
METRICS = ("euclidean", "cosine")


@dataclass(frozen=True)
class ShiftReport:
    distance: float
    per_class: dict[int, float] = field(default_factory=dict)
    skipped: tuple[int, ...] = ()


def wasserstein_inf_1d(xs, ys) -> float:
    """Sorted coupling is optimal on the line."""
    xs = np.sort(np.asarray(xs, dtype=np.float64).ravel())
    ys = np.sort(np.asarray(ys, dtype=np.float64).ravel())
    if xs.size != ys.size or xs.size == 0:
        raise ContractError(f"need two non-empty samples of equal size, got {xs.size} and {ys.size}")
    return float(np.max(np.abs(xs - ys)))


def _has_perfect_matching(allowed: npt.NDArray[np.bool_]) -> bool:
    matching = maximum_bipartite_matching(csr_matrix(allowed), perm_type="column")
    return bool(np.all(matching >= 0))


def wasserstein_inf_bottleneck(X, Y, metric: str = "euclidean") -> float:
    """
    min over perfect matchings of the largest matched cost. Binary search over
    the distinct pairwise costs, checking each threshold with a bipartite
    matching.
    """
    if metric not in METRICS:
        raise ContractError(f"unknown metric {metric!r}; options: {', '.join(METRICS)}")
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    if X.shape[0] != Y.shape[0] or X.shape[0] == 0:
        raise ContractError(f"need two non-empty point sets of equal size, got {X.shape[0]} and {Y.shape[0]}")
    if X.shape[0] > BOTTLENECK_CAP:
        raise ContractError(f"bottleneck matching is capped at {BOTTLENECK_CAP} points, got {X.shape[0]}")

    cost = cdist(X, Y, metric=metric)
    if metric == "cosine":
        # rounding can leave tiny negatives on identical directions
        cost = np.clip(cost, 0.0, None)
    thresholds = np.unique(cost)
    low, high = 0, thresholds.size - 1
    while low < high:
        middle = (low + high) // 2
        if _has_perfect_matching(cost <= thresholds[middle]):
            high = middle
        else:
            low = middle + 1
    return float(thresholds[low])


def distribution_shift(
    prev: PredictionSet, curr: PredictionSet, metric: str = "euclidean", cap: int = BOTTLENECK_CAP
) -> ShiftReport:
    """
    Partitions each step's predictions by pseudo-label, matches class sizes by
    keeping the first min(count_prev, count_curr, cap) rows of each side, and
    reports the largest per-class bottleneck distance. Classes empty on either
    side are skipped.
    """
    if prev.way != curr.way:
        raise ContractError(f"prediction sets disagree on way: {prev.way} vs {curr.way}")
    prev_labels = prev.pseudo_labels()
    curr_labels = curr.pseudo_labels()

    per_class: dict[int, float] = {}
    skipped = []
    for n in range(prev.way):
        before = prev.predictions[prev_labels == n]
        after = curr.predictions[curr_labels == n]
        count = min(before.shape[0], after.shape[0], cap)
        if count == 0:
            skipped.append(n)
            continue
        per_class[n] = wasserstein_inf_bottleneck(before[:count], after[:count], metric)

    if skipped:
        logger.debug("Shift diagnostic skipped empty classes %s", skipped)
    distance = max(per_class.values()) if per_class else 0.0
    return ShiftReport(distance=distance, per_class=per_class, skipped=tuple(skipped))
