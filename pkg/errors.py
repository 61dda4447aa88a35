"""
Exceptions raised across the lab. The CLI maps ConfigurationError to exit
code 2 and every other StepSPTError to exit code 3.
"""


class StepSPTError(Exception):
    """Base class for every error the lab raises on purpose."""


class ConfigurationError(StepSPTError, ValueError):
    """A run configuration is unusable. `key` names the offending setting."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class DimensionError(StepSPTError, ValueError):
    """Operands of a tensor op have incompatible shapes."""


class NumericError(StepSPTError, ArithmeticError):
    """A tensor carries NaN or infinity."""


class ContractError(StepSPTError, ValueError):
    """A caller broke a documented precondition."""


class DatasetFormatError(StepSPTError, ValueError):
    """A dataset or checkpoint file could not be decoded."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class SamplingError(StepSPTError, ValueError):
    """An episode cannot be drawn from the dataset."""


class RegimeError(StepSPTError, ValueError):
    """A bound was evaluated outside the regime it holds in."""


class SingularityError(StepSPTError, ZeroDivisionError):
    """A closed form hit a zero denominator."""


class EpisodeError(StepSPTError):
    """Wraps the failure of a single episode, tagging its index."""

    def __init__(self, episode_index: int, cause: BaseException):
        self.episode_index = episode_index
        self.cause = cause
        super().__init__(
            f"episode {episode_index} failed: {type(cause).__name__}: {cause}"
        )
