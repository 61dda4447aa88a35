import numpy as np

from engine.tape import Tape, Tensor
from errors import ContractError, DimensionError


def one_hot(labels, way: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise DimensionError(f"labels must be a vector, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= way):
        raise ContractError(f"labels must lie in [0, {way}), got {labels.min()}..{labels.max()}")
    encoded = np.zeros((labels.size, way))
    encoded[np.arange(labels.size), labels] = 1.0
    return encoded


def cross_entropy_loss(tape: Tape, probabilities: Tensor, labels) -> Tensor:
    """
    -sum_i ln p_{i, y_i}, summed rather than averaged over the rows. The log
    clamps probabilities at 1e-12.
    """
    if len(probabilities.shape) != 2:
        raise DimensionError(f"cross entropy needs (rows, way) probabilities, got {probabilities.shape}")
    rows, way = probabilities.shape
    targets = one_hot(labels, way)
    if targets.shape[0] != rows:
        raise DimensionError(f"{rows} prediction rows but {targets.shape[0]} labels")
    log_probabilities = tape.apply("log", probabilities)
    picked = tape.apply("sum", tape.apply("mul", targets, log_probabilities))
    return tape.apply("scale", picked, factor=-1.0)
