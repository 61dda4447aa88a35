import hashlib
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from errors import SamplingError
from ingest.synthetic import LabeledDataset

Array = npt.NDArray[np.float64]
Index = npt.NDArray[np.int64]


@dataclass(frozen=True, eq=False)
class Episode:
    """
    One N-way K-shot task. Support rows are grouped by class; query rows are
    shuffled. Labels are remapped to [0, way). `query_y` and `extra_y` are held
    out for scoring, and the extra query set takes no part in tuning.
    """

    support_x: Array
    support_y: npt.NDArray[np.int64]
    query_x: Array
    query_y: npt.NDArray[np.int64]
    way: int
    shot: int
    classes: tuple[int, ...]
    support_index: Index
    query_index: Index
    extra_x: Array | None = None
    extra_y: npt.NDArray[np.int64] | None = None
    extra_index: Index | None = None

    @property
    def samples(self) -> Array:
        """Support then query: the m samples the episode tunes on."""
        return np.concatenate([self.support_x, self.query_x], axis=0)

    @property
    def sample_count(self) -> int:
        return int(self.support_x.shape[0] + self.query_x.shape[0])

    @property
    def support_size(self) -> int:
        return int(self.support_x.shape[0])

    @property
    def has_extra_query(self) -> bool:
        return self.extra_x is not None and self.extra_x.shape[0] > 0

    def membership_hash(self) -> str:
        """sha256 over the chosen classes and dataset indices of every split."""
        sha = hashlib.sha256()
        sha.update(np.asarray(self.classes, dtype="<i8").tobytes())
        for index in (self.support_index, self.query_index, self.extra_index):
            sha.update(b"|")
            if index is not None:
                sha.update(np.asarray(index, dtype="<i8").tobytes())
        return sha.hexdigest()


def sample_episode(
    target: LabeledDataset,
    way: int,
    shot: int,
    query_per_class: int,
    seed: int | Sequence[int],
    extra_query_per_class: int = 0,
) -> Episode:
    """
    Draws classes without replacement, then samples within each class without
    replacement. Pass `seed=(global_seed, episode_index)` to get an episode
    that is independent of which worker draws it.
    """
    if way < 1 or shot < 1 or query_per_class < 1 or extra_query_per_class < 0:
        raise SamplingError("way, shot and query_per_class must be positive")
    if target.class_count < way:
        raise SamplingError(
            f"target has {target.class_count} classes, episode needs {way}"
        )

    rng = np.random.default_rng(seed)
    classes = rng.choice(target.class_count, size=way, replace=False)
    needed = shot + query_per_class + extra_query_per_class

    counts = target.class_counts()
    deficient = [int(c) for c in classes if counts[c] < needed]
    if deficient:
        details = ", ".join(f"class {c} has {counts[c]}" for c in deficient)
        raise SamplingError(f"need {needed} samples per class; {details}")

    support, query, extra = [], [], []
    for local_label, cls in enumerate(classes):
        members = rng.permutation(np.flatnonzero(target.labels == cls))[:needed]
        support.append((members[:shot], local_label))
        query.append((members[shot : shot + query_per_class], local_label))
        extra.append((members[shot + query_per_class :], local_label))

    support_index, support_y = _stack(support)
    query_index, query_y = _shuffled(_stack(query), rng)
    extra_index, extra_y = _shuffled(_stack(extra), rng)

    features = target.features
    return Episode(
        support_x=features[support_index],
        support_y=support_y,
        query_x=features[query_index],
        query_y=query_y,
        way=way,
        shot=shot,
        classes=tuple(int(c) for c in classes),
        support_index=support_index,
        query_index=query_index,
        extra_x=features[extra_index] if extra_query_per_class else None,
        extra_y=extra_y if extra_query_per_class else None,
        extra_index=extra_index if extra_query_per_class else None,
    )


def _stack(parts) -> tuple[Index, npt.NDArray[np.int64]]:
    index = np.concatenate([members for members, _ in parts]).astype(np.int64)
    labels = np.concatenate(
        [np.full(len(members), label, dtype=np.int64) for members, label in parts]
    )
    return index, labels


def _shuffled(split, rng: np.random.Generator):
    index, labels = split
    order = rng.permutation(len(index))
    return index[order], labels[order]
