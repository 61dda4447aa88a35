"""
The op library behind the tape. Each kind pairs a forward function with its
vector-Jacobian product, in the spirit of a Wengert list: the forward returns
the output plus whatever it wants saved, and the backward maps the gradient
of the output onto one gradient per input.

Broadcasting is limited to what the model needs: a per-channel vector against
a batch of rows, and a 0-d scalar against anything.
"""

from collections.abc import Callable
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt

from errors import ContractError, DimensionError

Array = npt.NDArray[np.float64]

# Inputs to `log` are clamped here so probabilities of exactly 0 stay finite.
LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class OpSpec:
    forward: Callable[..., tuple[Array, Any]]
    backward: Callable[..., list[Array | None]]
    # None means variadic
    arity: int | None


def _shapes_error(kind: str, *arrays: Array) -> DimensionError:
    shapes = ", ".join(str(a.shape) for a in arrays)
    return DimensionError(f"{kind}: incompatible shapes {shapes}")


def _broadcastable(a: Array, b: Array) -> bool:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return True
    if a.ndim == 1 and b.ndim == 2:
        return a.shape[0] == b.shape[1]
    if a.ndim == 2 and b.ndim == 1:
        return a.shape[1] == b.shape[0]
    return False


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    if grad.shape == shape:
        return grad
    if len(shape) == 0:
        return np.asarray(grad.sum())
    # (m, d) gradient flowing into a per-channel (d,) operand
    return grad.sum(axis=0)


def _check_pair(kind: str, a: Array, b: Array) -> None:
    if not _broadcastable(a, b):
        raise _shapes_error(kind, a, b)


def _expand(grad: Array, shape: tuple[int, ...], axis: int | None) -> Array:
    if axis is None:
        return np.broadcast_to(grad, shape)
    return np.broadcast_to(np.expand_dims(grad, axis), shape)


def _count(shape: tuple[int, ...], axis: int | None) -> int:
    return int(np.prod(shape)) if axis is None else shape[axis]


# Elementwise arithmetic


def _add(values, **_):
    a, b = values
    _check_pair("add", a, b)
    return a + b, None


def _add_grad(grad, values, out, saved, **_):
    a, b = values
    return [_unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)]


def _sub(values, **_):
    a, b = values
    _check_pair("sub", a, b)
    return a - b, None


def _sub_grad(grad, values, out, saved, **_):
    a, b = values
    return [_unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)]


def _mul(values, **_):
    a, b = values
    _check_pair("mul", a, b)
    return a * b, None


def _mul_grad(grad, values, out, saved, **_):
    a, b = values
    return [_unbroadcast(grad * b, a.shape), _unbroadcast(grad * a, b.shape)]


def _div(values, **_):
    a, b = values
    _check_pair("div", a, b)
    return a / b, None


def _div_grad(grad, values, out, saved, **_):
    a, b = values
    return [
        _unbroadcast(grad / b, a.shape),
        _unbroadcast(-grad * a / (b * b), b.shape),
    ]


def _scale(values, factor: float, **_):
    (x,) = values
    return x * factor, None


def _scale_grad(grad, values, out, saved, factor: float, **_):
    return [grad * factor]


# Linear algebra


def _matmul(values, **_):
    a, b = values
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise _shapes_error("matmul", a, b)
    return a @ b, None


def _matmul_grad(grad, values, out, saved, **_):
    a, b = values
    return [grad @ b.T, a.T @ grad]


def _add_bias(values, **_):
    a, bias = values
    if a.ndim != 2 or bias.ndim != 1 or a.shape[1] != bias.shape[0]:
        raise _shapes_error("add_bias", a, bias)
    return a + bias, None


def _add_bias_grad(grad, values, out, saved, **_):
    return [grad, grad.sum(axis=0)]


def _transpose(values, **_):
    (x,) = values
    if x.ndim != 2:
        raise _shapes_error("transpose", x)
    return x.T.copy(), None


def _transpose_grad(grad, values, out, saved, **_):
    return [grad.T]


# Nonlinearities


def _relu(values, **_):
    (x,) = values
    return np.maximum(x, 0.0), None


def _relu_grad(grad, values, out, saved, **_):
    (x,) = values
    return [grad * (x > 0.0)]


def _softmax(values, **_):
    (x,) = values
    if x.ndim == 0:
        raise _shapes_error("softmax", x)
    shifted = np.exp(x - x.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True), None


def _softmax_grad(grad, values, out, saved, **_):
    inner = (grad * out).sum(axis=-1, keepdims=True)
    return [out * (grad - inner)]


def _log(values, **_):
    (x,) = values
    return np.log(np.maximum(x, LOG_FLOOR)), None


def _log_grad(grad, values, out, saved, **_):
    (x,) = values
    safe = np.maximum(x, LOG_FLOOR)
    return [np.where(x > LOG_FLOOR, grad / safe, 0.0)]


# Reductions


def _check_axis(kind: str, x: Array, axis: int | None) -> None:
    if axis is not None and not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"{kind}: axis {axis} out of range for shape {x.shape}")


def _sum(values, axis: int | None = None, **_):
    (x,) = values
    _check_axis("sum", x, axis)
    return np.asarray(x.sum(axis=axis)), None


def _sum_grad(grad, values, out, saved, axis: int | None = None, **_):
    (x,) = values
    return [_expand(grad, x.shape, axis)]


def _mean(values, axis: int | None = None, **_):
    (x,) = values
    _check_axis("mean", x, axis)
    if x.size == 0:
        raise _shapes_error("mean", x)
    return np.asarray(x.mean(axis=axis)), None


def _mean_grad(grad, values, out, saved, axis: int | None = None, **_):
    (x,) = values
    return [_expand(grad, x.shape, axis) / _count(x.shape, axis)]


def _var(values, axis: int | None = None, **_):
    (x,) = values
    _check_axis("var", x, axis)
    if x.size == 0:
        raise _shapes_error("var", x)
    centred = x - x.mean(axis=axis, keepdims=True)
    return np.asarray((centred * centred).mean(axis=axis)), centred


def _var_grad(grad, values, out, centred, axis: int | None = None, **_):
    (x,) = values
    return [2.0 * centred * _expand(grad, x.shape, axis) / _count(x.shape, axis)]


def _l2_norm(values, **_):
    (x,) = values
    if x.ndim == 0:
        raise _shapes_error("l2_norm", x)
    return np.sqrt((x * x).sum(axis=-1)), None


def _l2_norm_grad(grad, values, out, saved, **_):
    (x,) = values
    norm = np.expand_dims(out, -1)
    # The norm is not differentiable at 0; take the zero subgradient there.
    direction = np.divide(x, norm, out=np.zeros_like(x), where=norm > 0)
    return [direction * np.expand_dims(grad, -1)]


def _cosine(values, **_):
    a, b = values
    if a.shape != b.shape or a.ndim == 0:
        raise _shapes_error("cosine", a, b)
    norm_a = np.sqrt((a * a).sum(axis=-1))
    norm_b = np.sqrt((b * b).sum(axis=-1))
    if np.any(norm_a == 0) or np.any(norm_b == 0):
        raise ContractError("cosine: zero-norm vector")
    similarity = (a * b).sum(axis=-1) / (norm_a * norm_b)
    return similarity, (norm_a, norm_b)


def _cosine_grad(grad, values, out, saved, **_):
    a, b = values
    norm_a, norm_b = (np.expand_dims(n, -1) for n in saved)
    similarity = np.expand_dims(out, -1)
    g = np.expand_dims(grad, -1)
    grad_a = b / (norm_a * norm_b) - similarity * a / (norm_a * norm_a)
    grad_b = a / (norm_a * norm_b) - similarity * b / (norm_b * norm_b)
    return [grad_a * g, grad_b * g]


# Structural


def _concat(values, axis: int = 0, **_):
    if not values:
        raise DimensionError("concat: no inputs")
    reference = values[0]
    for other in values[1:]:
        if other.ndim != reference.ndim or any(
            s != t for i, (s, t) in enumerate(zip(other.shape, reference.shape, strict=True)) if i != axis
        ):
            raise _shapes_error("concat", *values)
    return np.concatenate(values, axis=axis), [v.shape[axis] for v in values]


def _concat_grad(grad, values, out, sizes, axis: int = 0, **_):
    splits = np.cumsum(sizes)[:-1]
    return list(np.split(grad, splits, axis=axis))


def _gather_rows(values, index: tuple[int, ...] = (), **_):
    (x,) = values
    if x.ndim == 0 or any(not 0 <= i < x.shape[0] for i in index):
        raise DimensionError(f"gather_rows: index out of range for shape {x.shape}")
    return x[list(index)], None


def _gather_rows_grad(grad, values, out, saved, index: tuple[int, ...] = (), **_):
    (x,) = values
    scattered = np.zeros_like(x)
    np.add.at(scattered, list(index), grad)
    return [scattered]


OPS: dict[str, OpSpec] = {
    "add": OpSpec(_add, _add_grad, 2),
    "sub": OpSpec(_sub, _sub_grad, 2),
    "mul": OpSpec(_mul, _mul_grad, 2),
    "div": OpSpec(_div, _div_grad, 2),
    "scale": OpSpec(_scale, _scale_grad, 1),
    "matmul": OpSpec(_matmul, _matmul_grad, 2),
    "add_bias": OpSpec(_add_bias, _add_bias_grad, 2),
    "transpose": OpSpec(_transpose, _transpose_grad, 1),
    "relu": OpSpec(_relu, _relu_grad, 1),
    "softmax": OpSpec(_softmax, _softmax_grad, 1),
    "log": OpSpec(_log, _log_grad, 1),
    "sum": OpSpec(_sum, _sum_grad, 1),
    "mean": OpSpec(_mean, _mean_grad, 1),
    "var": OpSpec(_var, _var_grad, 1),
    "l2_norm": OpSpec(_l2_norm, _l2_norm_grad, 1),
    "cosine": OpSpec(_cosine, _cosine_grad, 2),
    "concat": OpSpec(_concat, _concat_grad, None),
    "gather_rows": OpSpec(_gather_rows, _gather_rows_grad, 1),
}
