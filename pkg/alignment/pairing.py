"""
Chain-based pair generation between adjacent steps.

Starting from sample i, hop to the cosine-nearest unvisited prediction of the
previous step, and keep hopping until a hop lands in the credible group. A
visited set bounds every chain at m - 1 hops; if every other sample has been
visited without reaching the group, the pair falls back to the group member
most similar to the starting prediction.
"""

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from alignment.credible import CredibleGroup, PredictionSet
from errors import ContractError

Array = npt.NDArray[np.float64]


@dataclass(frozen=True)
class ChainTrace:
    path: tuple[int, ...]
    partner: int
    fell_back: bool

    @property
    def hops(self) -> int:
        return len(self.path)


@dataclass(frozen=True, eq=False)
class PairSet:
    """Row k pairs current sample k with a credible-group member of the previous step."""

    pairs: npt.NDArray[np.int64]  # (m, 2): (i, j)
    hops: npt.NDArray[np.int64]

    @property
    def partners(self) -> npt.NDArray[np.int64]:
        return self.pairs[:, 1]

    def __len__(self) -> int:
        return int(self.pairs.shape[0])


def cosine_matrix(a: Array, b: Array) -> Array:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    norm_a = np.linalg.norm(a, axis=1, keepdims=True)
    norm_b = np.linalg.norm(b, axis=1, keepdims=True)
    if np.any(norm_a == 0) or np.any(norm_b == 0):
        raise ContractError("cosine similarity of a zero-norm vector")
    return (a / norm_a) @ (b / norm_b).T


def _walk(
    start: int,
    first_hop: Array,
    neighbours: Array,
    in_group: npt.NDArray[np.bool_],
    group: CredibleGroup,
) -> ChainTrace:
    size = first_hop.shape[0]
    visited = np.zeros(size, dtype=bool)
    visited[start] = True
    scores = first_hop
    path = []
    while not visited.all():
        candidates = np.where(visited, -np.inf, scores)
        # argmax returns the lowest index among equal similarities
        hop = int(np.argmax(candidates))
        visited[hop] = True
        path.append(hop)
        if in_group[hop]:
            return ChainTrace(tuple(path), hop, fell_back=False)
        scores = neighbours[hop]

    members = np.asarray(group.members)
    best = int(members[np.argmax(first_hop[members])])
    return ChainTrace(tuple(path), best, fell_back=True)


def trace_chain(
    i: int, prev: PredictionSet, group: CredibleGroup, start: Array | None = None
) -> ChainTrace:
    """
    The full hop sequence for sample i. `start` is the prediction the chain
    begins from; it defaults to i's own previous-step prediction.
    """
    if len(group) == 0:
        raise ContractError("chain search needs a non-empty credible group")
    if not 0 <= i < prev.size:
        raise ContractError(f"sample index {i} outside [0, {prev.size})")
    origin = prev.predictions[i] if start is None else np.asarray(start, dtype=np.float64)
    first_hop = cosine_matrix(origin, prev.predictions)[0]
    neighbours = cosine_matrix(prev.predictions, prev.predictions)
    return _walk(i, first_hop, neighbours, group.mask(prev.size), group)


def chain_search(
    i: int, prev: PredictionSet, group: CredibleGroup, start: Array | None = None
) -> int:
    """The credible partner of sample i."""
    return trace_chain(i, prev, group, start).partner


def pair_all(curr: PredictionSet, prev: PredictionSet, group: CredibleGroup) -> PairSet:
    """One pair per current sample; chains start from the current predictions."""
    if len(group) == 0:
        raise ContractError("pairing needs a non-empty credible group")
    if curr.size != prev.size:
        raise ContractError(
            f"current step has {curr.size} samples, previous step has {prev.size}"
        )
    first_hops = cosine_matrix(curr.predictions, prev.predictions)
    neighbours = cosine_matrix(prev.predictions, prev.predictions)
    in_group = group.mask(prev.size)

    pairs = np.empty((curr.size, 2), dtype=np.int64)
    hops = np.empty(curr.size, dtype=np.int64)
    for i in range(curr.size):
        trace = _walk(i, first_hops[i], neighbours, in_group, group)
        pairs[i] = (i, trace.partner)
        hops[i] = trace.hops
    return PairSet(pairs=pairs, hops=hops)
