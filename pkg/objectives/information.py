"""
External-phase objectives over class-probability rows.

The mutual-information term follows the invariant-information-clustering
estimator: pair each current prediction with its partner's prediction, average
the outer products into an N x N joint, symmetrise it, and read I off the
joint and its marginals. Natural logarithms throughout.
"""

from typing import NamedTuple

import numpy as np

from engine.tape import Tape, Tensor
from errors import ContractError, DimensionError


class ExternalLoss(NamedTuple):
    total: Tensor
    mutual_information: Tensor | None
    diversity: Tensor


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def joint_distribution(tape: Tape, current, partners) -> Tensor:
    """P = sym((1/m) sum_i p_i (x) p'_i). Row i of `partners` is the partner of row i of `current`."""
    current, partners = _as_tensor(current), _as_tensor(partners)
    if len(current.shape) != 2 or current.shape != partners.shape:
        raise DimensionError(
            f"pairs need matching (m, N) matrices, got {current.shape} and {partners.shape}"
        )
    pairs = current.shape[0]
    if pairs == 0:
        raise ContractError("joint distribution of an empty pair set")
    outer = tape.apply("matmul", tape.apply("transpose", current), partners)
    joint = tape.apply("scale", outer, factor=1.0 / pairs)
    symmetric = tape.apply("add", joint, tape.apply("transpose", joint))
    return tape.apply("scale", symmetric, factor=0.5)


def _plogp(tape: Tape, p: Tensor) -> Tensor:
    # log clamps at 1e-12, so zero entries contribute 0 * ln(1e-12) = 0
    return tape.apply("sum", tape.apply("mul", p, tape.apply("log", p)))


def mutual_information_loss(tape: Tape, current, partners) -> Tensor:
    """
    -I(p, p'). With P the joint and P_a, P_b its marginals,
    I = sum P ln P - sum P_a ln P_a - sum P_b ln P_b, which lies in [0, ln N].
    """
    joint = joint_distribution(tape, current, partners)
    rows = tape.apply("sum", joint, axis=1)
    cols = tape.apply("sum", joint, axis=0)
    marginals = tape.apply("add", _plogp(tape, rows), _plogp(tape, cols))
    return tape.apply("sub", marginals, _plogp(tape, joint))


def kl_diversity_loss(tape: Tape, predictions) -> Tensor:
    """KL(p_bar || uniform) = sum_n p_bar_n ln(N p_bar_n), where p_bar is the mean prediction."""
    predictions = _as_tensor(predictions)
    if len(predictions.shape) != 2 or predictions.shape[0] == 0:
        raise ContractError(f"diversity loss needs at least one prediction row, got {predictions.shape}")
    way = predictions.shape[1]
    marginal = tape.apply("mean", predictions, axis=0)
    scaled = tape.apply("log", tape.apply("scale", marginal, factor=float(way)))
    return tape.apply("sum", tape.apply("mul", marginal, scaled))


def external_loss(
    tape: Tape, current, partners, sigma: float, use_mi: bool = True
) -> ExternalLoss:
    """
    L_ex = L_MI + sigma * L_KL over the current predictions of all m samples.
    Partners are constants; gradients reach whatever produced `current`.
    With `use_mi` off the total is sigma * L_KL exactly.
    """
    if sigma < 0 or not np.isfinite(sigma):
        raise ContractError(f"sigma must be a finite value >= 0, got {sigma}")
    diversity = kl_diversity_loss(tape, current)
    weighted = tape.apply("scale", diversity, factor=float(sigma))
    if not use_mi:
        return ExternalLoss(total=weighted, mutual_information=None, diversity=diversity)
    information = mutual_information_loss(tape, current, partners)
    return ExternalLoss(
        total=tape.apply("add", information, weighted),
        mutual_information=information,
        diversity=diversity,
    )
