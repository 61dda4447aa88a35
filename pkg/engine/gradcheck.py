from collections.abc import Callable

import numpy as np
import numpy.typing as npt

from engine.tape import Parameter, Tape, Tensor

ScalarFn = Callable[[Tape, Tensor], Tensor]


def _evaluate(fn: ScalarFn, values: npt.NDArray[np.float64]) -> float:
    return fn(Tape(), Tensor(values)).item()


def grad_check(fn: ScalarFn, point, step: float = 1e-4) -> float:
    """
    Compares the tape gradient of a scalar function against central differences.

    Args:
        fn: Builds the scalar on the tape it is given, from the tensor it is given.
        point: Where to evaluate. Keep it clear of ReLU kinks.
        step: Finite-difference step h.

    Returns:
        float: max over coordinates of |analytic - numeric| / max(1, |analytic|).
    """
    point = np.array(point, dtype=np.float64)
    parameter = Parameter(point, name="point")
    tape = Tape()
    loss = fn(tape, tape.watch(parameter))

    # A function that never touches its input has nothing on the tape.
    if tape.produced(loss):
        tape.backward(loss)
        analytic = parameter.grad
    else:
        analytic = np.zeros_like(point)

    numeric = np.empty_like(point)
    for index in np.ndindex(point.shape):
        ahead = point.copy()
        behind = point.copy()
        ahead[index] += step
        behind[index] -= step
        numeric[index] = (_evaluate(fn, ahead) - _evaluate(fn, behind)) / (2 * step)

    if point.size == 0:
        return 0.0
    error = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(error.max())
