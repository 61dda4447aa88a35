"""
Credible groups: the subset of last step's predictions trusted as alignment
anchors. G_en keeps the lowest-entropy samples, G_pro the samples most similar
to some class prototype, and G is their intersection.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from scipy.special import entr

from errors import ContractError

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

DISTRIBUTION_TOLERANCE = 1e-9
CREDIBLE_RULES = ("both", "entropy", "prototype")


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Class-probability rows for every sample of an episode at one step."""

    predictions: Array
    step_index: int = 0
    indices: npt.NDArray[np.int64] | None = None

    def __post_init__(self):
        predictions = np.array(self.predictions, dtype=np.float64)
        if predictions.ndim != 2:
            raise ContractError(f"predictions must be (m, N), got {predictions.shape}")
        if np.any(predictions < 0) or np.any(
            np.abs(predictions.sum(axis=1) - 1.0) > DISTRIBUTION_TOLERANCE
        ):
            raise ContractError("every prediction row must be a probability distribution")
        predictions.setflags(write=False)
        object.__setattr__(self, "predictions", predictions)
        if self.indices is None:
            object.__setattr__(self, "indices", np.arange(predictions.shape[0]))

    @property
    def size(self) -> int:
        return int(self.predictions.shape[0])

    @property
    def way(self) -> int:
        return int(self.predictions.shape[1])

    def pseudo_labels(self) -> npt.NDArray[np.int64]:
        return np.argmax(self.predictions, axis=1)


@dataclass(frozen=True, eq=False)
class CredibleGroup:
    """Members (sorted sample indices) and their predictions from the previous step."""

    members: tuple[int, ...]
    snapshot: Array
    used_fallback: bool = False
    _member_set: frozenset[int] = field(init=False, repr=False)

    def __post_init__(self):
        snapshot = np.array(self.snapshot, dtype=np.float64)
        snapshot.setflags(write=False)
        object.__setattr__(self, "snapshot", snapshot)
        object.__setattr__(self, "_member_set", frozenset(self.members))

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, index: int) -> bool:
        return index in self._member_set

    def mask(self, size: int) -> npt.NDArray[np.bool_]:
        mask = np.zeros(size, dtype=bool)
        mask[list(self.members)] = True
        return mask

    def prediction_of(self, index: int) -> Array:
        return self.snapshot[self.members.index(index)]


def group_size(fraction: float, m: int) -> int:
    """max(1, floor(fraction * m))"""
    return max(1, math.floor(fraction * m))


def _check_fraction(name: str, value: float) -> None:
    if not 0 < value <= 1:
        raise ContractError(f"{name} must lie in (0, 1], got {value}")


def _check_distribution(p: Array) -> None:
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > DISTRIBUTION_TOLERANCE:
        raise ContractError("entropy needs a probability vector summing to 1")


def entropy(p) -> float:
    """Natural-log Shannon entropy; zero-probability terms contribute 0."""
    p = np.asarray(p, dtype=np.float64)
    _check_distribution(p)
    return float(entr(p).sum())


def entropies(predictions: Array) -> Array:
    return entr(predictions).sum(axis=1)


def entropy_group(prev: PredictionSet, alpha: float) -> frozenset[int]:
    """The max(1, floor(alpha*m)) lowest-entropy samples; ties go to the lower index."""
    _check_fraction("alpha", alpha)
    order = np.argsort(entropies(prev.predictions), kind="stable")
    return frozenset(int(i) for i in order[: group_size(alpha, prev.size)])


def prototype_centers(support_predictions, support_labels, way: int) -> Array:
    """o_n: the mean support prediction of each class n."""
    support_predictions = np.asarray(support_predictions, dtype=np.float64)
    support_labels = np.asarray(support_labels)
    centers = np.empty((way, support_predictions.shape[1]))
    for n in range(way):
        rows = support_predictions[support_labels == n]
        if rows.shape[0] == 0:
            raise ContractError(f"class {n} has no support predictions")
        centers[n] = rows.mean(axis=0)
    return centers


def _unit_rows(matrix: Array) -> Array:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ContractError("cosine similarity of a zero-norm vector")
    return matrix / norms


def prototype_scores(predictions: Array, centers: Array) -> Array:
    """a_i = max_n cos(p_i, o_n)."""
    return (_unit_rows(predictions) @ _unit_rows(centers).T).max(axis=1)


def prototype_group(prev: PredictionSet, centers: Array, gamma: float) -> frozenset[int]:
    """
    The max(1, floor(gamma*m)) samples closest to some prototype, ties to the
    lower index. Ranked by highest max-similarity: samples confidently inside
    one category, not samples far from all of them.
    """
    _check_fraction("gamma", gamma)
    scores = prototype_scores(prev.predictions, centers)
    order = np.argsort(-scores, kind="stable")
    return frozenset(int(i) for i in order[: group_size(gamma, prev.size)])


def credible_group(
    prev: PredictionSet,
    alpha: float,
    gamma: float,
    support_labels,
    rule: str = "both",
) -> CredibleGroup:
    """
    G = G_pro & G_en over the previous step's predictions. The first
    len(support_labels) rows of `prev` are the support samples, which define
    the prototypes. An empty intersection falls back to G_en.

    `rule` selects the single-criterion variants: "entropy" or "prototype".
    """
    if rule not in CREDIBLE_RULES:
        raise ContractError(f"unknown credible rule {rule!r}")
    support_labels = np.asarray(support_labels)
    way = prev.way

    entropy_members = entropy_group(prev, alpha) if rule != "prototype" else None
    prototype_members = None
    if rule != "entropy":
        centers = prototype_centers(
            prev.predictions[: len(support_labels)], support_labels, way
        )
        prototype_members = prototype_group(prev, centers, gamma)

    fallback = False
    if rule == "entropy":
        members = entropy_members
    elif rule == "prototype":
        members = prototype_members
    else:
        members = entropy_members & prototype_members
        if not members:
            logger.debug(
                "Step %d: credible intersection empty, falling back to the entropy group",
                prev.step_index,
            )
            members = entropy_members
            fallback = True

    ordered = tuple(sorted(members))
    return CredibleGroup(
        members=ordered,
        snapshot=prev.predictions[list(ordered)],
        used_fallback=fallback,
    )
