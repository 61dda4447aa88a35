"""
Reverse-mode differentiation over dense float64 tensors.

A Tape records every op applied through it. `Tape.backward` walks the record
in reverse and writes d(loss)/d(param) into each trainable Parameter watched
on that tape. Tapes are meant to live for one optimisation step and then be
dropped; nothing is shared between them.
"""

from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt

from engine.ops import OPS
from errors import ContractError, DimensionError, NumericError

Array = npt.NDArray[np.float64]


class Tensor:
    """An immutable float64 array. Safe to share read-only between workers."""

    __slots__ = ("values",)

    def __init__(self, values: Any):
        array = np.array(values, dtype=np.float64)
        array.setflags(write=False)
        self.values: Array = array

    @classmethod
    def _adopt(cls, array: Array) -> "Tensor":
        # Op outputs are fresh arrays, never shared, so no copy is taken.
        tensor = cls.__new__(cls)
        array = np.asarray(array, dtype=np.float64)
        array.setflags(write=False)
        tensor.values = array
        return tensor

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return int(self.values.size)

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() needs a single value, got shape {self.shape}")
        return float(self.values.reshape(()))

    def numpy(self) -> Array:
        return self.values

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class Parameter:
    """A named, replaceable Tensor plus the gradient written by the last backward."""

    def __init__(self, values: Any, requires_grad: bool = True, name: str = ""):
        self.name = name
        self.tensor = Tensor(values)
        self.requires_grad = requires_grad
        self.grad: Array = np.zeros(self.tensor.shape)

    @property
    def values(self) -> Array:
        return self.tensor.values

    @property
    def shape(self) -> tuple[int, ...]:
        return self.tensor.shape

    def assign(self, values: Any) -> None:
        """Swap in new values. Frozen parameters refuse."""
        if not self.requires_grad:
            raise ContractError(f"parameter {self.name!r} is frozen")
        replacement = Tensor(values)
        if replacement.shape != self.shape:
            raise DimensionError(
                f"assign {self.name!r}: shape {replacement.shape} != {self.shape}"
            )
        self.tensor = replacement

    def __repr__(self) -> str:
        state = "trainable" if self.requires_grad else "frozen"
        return f"Parameter({self.name!r}, shape={self.shape}, {state})"


@contextmanager
def frozen(*parameters: Parameter) -> Iterator[None]:
    """Temporarily mark parameters as frozen, restoring their flags afterwards."""
    previous = [p.requires_grad for p in parameters]
    for p in parameters:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, flag in zip(parameters, previous, strict=True):
            p.requires_grad = flag


@dataclass
class Node:
    kind: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    attrs: dict[str, Any]
    saved: Any = None


@dataclass
class Tape:
    nodes: list[Node] = field(default_factory=list)
    _parameters: dict[int, Parameter] = field(default_factory=dict)
    # ids of tensors whose gradient is needed: trainable leaves plus
    # everything computed from them
    _tracked: set[int] = field(default_factory=set)
    _produced: set[int] = field(default_factory=set)
    # keeps watched leaves alive so their ids cannot be reused
    _leaves: list[Tensor] = field(default_factory=list)

    def watch(self, parameter: Parameter) -> Tensor:
        """Bring a parameter onto the tape. Frozen ones enter as constants."""
        tensor = parameter.tensor
        self._leaves.append(tensor)
        if parameter.requires_grad:
            self._parameters[id(tensor)] = parameter
            self._tracked.add(id(tensor))
        return tensor

    def produced(self, tensor: Tensor) -> bool:
        return id(tensor) in self._produced

    def apply(self, kind: str, *inputs: Any, **attrs: Any) -> Tensor:
        """Run one op forward and record it."""
        spec = OPS.get(kind)
        if spec is None:
            raise ContractError(f"unknown op kind {kind!r}")
        if spec.arity is not None and len(inputs) != spec.arity:
            raise ContractError(f"{kind} takes {spec.arity} inputs, got {len(inputs)}")

        tensors = tuple(t if isinstance(t, Tensor) else Tensor(t) for t in inputs)
        for tensor in tensors:
            if not np.all(np.isfinite(tensor.values)):
                raise NumericError(f"{kind}: non-finite input of shape {tensor.shape}")

        values, saved = spec.forward([t.values for t in tensors], **attrs)
        if not np.all(np.isfinite(values)):
            raise NumericError(f"{kind}: produced non-finite output")

        output = Tensor._adopt(values)
        self.nodes.append(Node(kind, tensors, output, attrs, saved))
        self._produced.add(id(output))
        if any(id(t) in self._tracked for t in tensors):
            self._tracked.add(id(output))
        return output

    def backward(self, loss: Tensor) -> None:
        """Fill `.grad` on every trainable parameter watched on this tape."""
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not self.produced(loss):
            raise ContractError("backward: loss was not computed on this tape")

        grads: dict[int, Array] = {id(loss): np.ones(loss.shape)}
        for node in reversed(self.nodes):
            grad = grads.pop(id(node.output), None)
            if grad is None or id(node.output) not in self._tracked:
                continue
            spec = OPS[node.kind]
            input_grads = spec.backward(
                grad,
                [t.values for t in node.inputs],
                node.output.values,
                node.saved,
                **node.attrs,
            )
            for tensor, input_grad in zip(node.inputs, input_grads, strict=True):
                key = id(tensor)
                if input_grad is None or key not in self._tracked:
                    continue
                if key in grads:
                    grads[key] = grads[key] + input_grad
                else:
                    grads[key] = np.array(input_grad, dtype=np.float64)

        for key, parameter in self._parameters.items():
            gradient = grads.get(key)
            parameter.grad = (
                np.zeros(parameter.shape) if gradient is None else gradient.reshape(parameter.shape)
            )


def forward_op(tape: Tape, kind: str, inputs: list[Any], **attrs: Any) -> Tensor:
    """Functional spelling of `tape.apply`."""
    return tape.apply(kind, *inputs, **attrs)


def backward(tape: Tape, loss: Tensor) -> None:
    tape.backward(loss)
