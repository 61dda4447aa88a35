from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from engine.tape import Parameter, Tape, Tensor
from errors import ContractError, DimensionError, NumericError

Array = npt.NDArray[np.float64]

DEFAULT_EPSILON = 1e-5


@dataclass(frozen=True)
class TargetStats:
    """Per-channel mean and population variance of one episode's samples."""

    mu: Array
    sigma2: Array
    sample_count: int

    @property
    def channels(self) -> int:
        return int(self.mu.shape[0])


def compute_target_stats(samples) -> TargetStats:
    """
    Statistics over support and query together, with divisor m.

    Computed once per episode and then held fixed while the prompt trains.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise DimensionError(f"target stats need an (m, channels) matrix, got {samples.shape}")
    if samples.shape[0] < 2:
        raise ContractError(
            f"degenerate target stats: need at least 2 samples, got {samples.shape[0]}"
        )
    mu = samples.mean(axis=0)
    sigma2 = samples.var(axis=0)
    mu.setflags(write=False)
    sigma2.setflags(write=False)
    return TargetStats(mu=mu, sigma2=sigma2, sample_count=int(samples.shape[0]))


class StylePrompt:
    """
    Per-channel affine applied to standardised inputs:
    x_p = omega1 * (x - mu) / sqrt(sigma2 + epsilon) + omega2.
    """

    def __init__(self, omega1, omega2, epsilon: float = DEFAULT_EPSILON):
        if epsilon < 0:
            raise ContractError(f"epsilon must be non-negative, got {epsilon}")
        self.omega1 = Parameter(omega1, name="omega1")
        self.omega2 = Parameter(omega2, name="omega2")
        if self.omega1.shape != self.omega2.shape or len(self.omega1.shape) != 1:
            raise DimensionError(
                f"omega1 {self.omega1.shape} and omega2 {self.omega2.shape} "
                "must be vectors of the same length"
            )
        self.epsilon = epsilon

    @classmethod
    def identity(cls, channels: int, epsilon: float = DEFAULT_EPSILON) -> "StylePrompt":
        """The per-episode starting point: unit scale, zero shift."""
        return cls(np.ones(channels), np.zeros(channels), epsilon)

    @classmethod
    def passthrough(cls, stats: TargetStats, epsilon: float = DEFAULT_EPSILON) -> "StylePrompt":
        """The prompt that undoes the standardisation, mapping x back onto itself."""
        return cls(np.sqrt(stats.sigma2 + epsilon), stats.mu, epsilon)

    @property
    def channels(self) -> int:
        return self.omega1.shape[0]

    def parameters(self) -> list[Parameter]:
        return [self.omega1, self.omega2]


def standardize(x, stats: TargetStats, epsilon: float) -> Array:
    x = np.asarray(x.values if isinstance(x, Tensor) else x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != stats.channels:
        raise DimensionError(
            f"style prompt: input {x.shape} does not match {stats.channels} channels"
        )
    denominator = stats.sigma2 + epsilon
    if np.any(denominator <= 0):
        raise NumericError("style prompt: sigma2 + epsilon must be positive")
    return (x - stats.mu) / np.sqrt(denominator)


def apply_style_prompt(tape: Tape, x, stats: TargetStats, prompt: StylePrompt) -> Tensor:
    """Differentiable in omega1 and omega2; the statistics enter as constants."""
    if prompt.channels != stats.channels:
        raise DimensionError(
            f"style prompt has {prompt.channels} channels, stats have {stats.channels}"
        )
    standardized = standardize(x, stats, prompt.epsilon)
    scaled = tape.apply("mul", standardized, tape.watch(prompt.omega1))
    return tape.apply("add", scaled, tape.watch(prompt.omega2))
