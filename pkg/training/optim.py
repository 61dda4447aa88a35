from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from engine.tape import Parameter
from errors import ConfigurationError, DimensionError

Array = npt.NDArray[np.float64]


@dataclass
class SGDState:
    """One per parameter group: the prompt and the classifier keep separate velocities."""

    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.001
    velocity: dict[Parameter, Array] = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate < 0 or not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise ConfigurationError(
                "lr",
                f"invalid SGD settings lr={self.learning_rate}, momentum={self.momentum}, "
                f"weight_decay={self.weight_decay}",
            )


def sgd_update(state: SGDState, parameters: Iterable[Parameter], grads: Iterable[Array] | None = None) -> None:
    """
    v <- momentum * v + grad + weight_decay * param; param <- param - lr * v.

    Gradients default to each parameter's `.grad`. Frozen parameters are skipped.
    """
    parameters = list(parameters)
    grads = [p.grad for p in parameters] if grads is None else list(grads)
    for parameter, grad in zip(parameters, grads, strict=True):
        if not parameter.requires_grad:
            continue
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != parameter.shape:
            raise DimensionError(
                f"gradient {grad.shape} does not match parameter {parameter.name!r} {parameter.shape}"
            )
        velocity = state.velocity.get(parameter)
        if velocity is None:
            velocity = np.zeros(parameter.shape)
        velocity = state.momentum * velocity + grad + state.weight_decay * parameter.values
        state.velocity[parameter] = velocity
        parameter.assign(parameter.values - state.learning_rate * velocity)


@dataclass(frozen=True)
class StepSchedule:
    """E alignment steps, each preceded by max_epochs / E internal epochs."""

    total_steps: int
    internal_epochs_per_step: int
    support_batch_size: int

    @classmethod
    def build(cls, steps: int, max_epochs: int, batch_size: int, support_size: int) -> "StepSchedule":
        """`batch_size` 0 means the full support set."""
        if steps < 1:
            raise ConfigurationError("steps", f"steps must be >= 1, got {steps}")
        if max_epochs < 0 or max_epochs % steps:
            raise ConfigurationError(
                "max_epochs", f"max_epochs {max_epochs} is not a multiple of steps {steps}"
            )
        if batch_size < 0:
            raise ConfigurationError("batch_size", f"batch_size must be >= 0, got {batch_size}")
        return cls(
            total_steps=steps,
            internal_epochs_per_step=max_epochs // steps,
            support_batch_size=batch_size or support_size,
        )

    @property
    def total_internal_epochs(self) -> int:
        return self.total_steps * self.internal_epochs_per_step
