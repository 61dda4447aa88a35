import numpy as np
import numpy.typing as npt
from scipy.spatial.distance import cdist

from errors import ContractError
from objectives.supervised import one_hot

Array = npt.NDArray[np.float64]


def knn_affinity(points: Array, k: int) -> Array:
    """Symmetric cosine kNN graph (self excluded), row-normalised."""
    size = points.shape[0]
    similarity = 1.0 - cdist(points, points, metric="cosine")
    np.fill_diagonal(similarity, -np.inf)
    k = min(k, size - 1)
    affinity = np.zeros((size, size))
    if k > 0:
        neighbours = np.argsort(-similarity, axis=1, kind="stable")[:, :k]
        rows = np.repeat(np.arange(size), k)
        affinity[rows, neighbours.ravel()] = np.clip(similarity[rows, neighbours.ravel()], 0.0, None)
    affinity = (affinity + affinity.T) / 2.0
    degree = affinity.sum(axis=1, keepdims=True)
    return np.divide(affinity, degree, out=np.zeros_like(affinity), where=degree > 0)


def label_propagation(
    predictions,
    support_labels,
    k_neighbors: int = 10,
    alpha_lp: float = 0.75,
    iterations: int = 20,
    tolerance: float = 1e-9,
) -> Array:
    """
    Refines query predictions by spreading labels over a kNN graph.

    Args:
        predictions: (m, N) predictions for support then query rows.
        support_labels: Labels of the first len(support_labels) rows.
        k_neighbors: Graph degree before symmetrisation.
        alpha_lp: Weight of the propagated term in F <- a*S*F + (1-a)*Y.
        iterations: Iteration cap. 0 returns the query rows untouched.

    Returns:
        Array: Row-normalised refined predictions for the query rows.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    support_labels = np.asarray(support_labels, dtype=np.int64)
    if k_neighbors < 1:
        raise ContractError(f"k_neighbors must be >= 1, got {k_neighbors}")
    if not 0 <= alpha_lp <= 1 or iterations < 0:
        raise ContractError("alpha_lp must lie in [0, 1] and iterations must be >= 0")

    support_size = support_labels.shape[0]
    if iterations == 0:
        return predictions[support_size:].copy()

    prior = predictions.copy()
    prior[:support_size] = one_hot(support_labels, predictions.shape[1])
    graph = knn_affinity(predictions, k_neighbors)

    scores = prior
    for _ in range(iterations):
        updated = alpha_lp * graph @ scores + (1.0 - alpha_lp) * prior
        converged = np.max(np.abs(updated - scores)) < tolerance
        scores = updated
        if converged:
            break

    query = scores[support_size:]
    totals = query.sum(axis=1, keepdims=True)
    uniform = np.full_like(query, 1.0 / query.shape[1])
    return np.where(totals > 0, query / np.where(totals > 0, totals, 1.0), uniform)
