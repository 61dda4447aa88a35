"""
The run configuration: a flat key=value document read with python-dotenv.

Every key is a RunConfig field. Omitted keys take the defaults below; command
line flags override the file.
"""

import math
import types
import typing
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

from dotenv import dotenv_values

from errors import ConfigurationError
from ingest.config import PRESETS, preset_sigma
from ingest.synthetic import DomainShiftSpec
from training.ablation import AblationMode

SWEEP_KEYS = ("alpha", "gamma", "sigma", "steps")
STEP_SIZE_GRID = (2, 5, 10, 20, 50, 100)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    episodes: int = 100
    way: int = 5
    shot: int = 1
    query_per_class: int = 15
    extra_query_per_class: int = 0
    # synthetic benchmark
    source_classes: int = 10
    target_classes: int = 10
    dim: int = 16
    source_per_class: int = 100
    target_per_class: int = 40
    cluster_spread: float = 0.35
    preset: str = "distant"
    shift_scale: tuple[float, ...] | None = None
    shift_offset: tuple[float, ...] | None = None
    warp_gamma: float | None = None
    noise_sigma: float | None = None
    source_path: str | None = None
    target_path: str | None = None
    # backbone
    hidden_widths: tuple[int, ...] = (64, 64, 64)
    pretrain_epochs: int = 30
    pretrain_lr: float = 0.05
    pretrain_batch_size: int = 50
    backbone_path: str | None = None
    # schedule and optimisation
    steps: int = 20
    max_epochs: int = 20
    batch_size: int = 0
    alpha: float = 0.7
    gamma: float = 0.4
    sigma: float | None = None
    lr: float = 0.01
    prompt_lr_scale: float = 10.0
    momentum: float = 0.9
    weight_decay: float = 0.001
    epsilon: float = 1e-5
    ablation: str = "full"
    # label propagation
    lp_neighbors: int = 10
    lp_alpha: float = 0.75
    lp_iterations: int = 20
    track_shift: bool = True
    output: str = ""

    def __post_init__(self):
        _validate(self)

    @property
    def effective_sigma(self) -> float:
        """An unset sigma takes the preset's value."""
        return preset_sigma(self.preset) if self.sigma is None else self.sigma

    @property
    def support_size(self) -> int:
        return self.way * self.shot

    def shift_spec(self) -> DomainShiftSpec | None:
        """The explicit domain shift, when any of its keys is set."""
        explicit = (self.shift_scale, self.shift_offset, self.warp_gamma, self.noise_sigma)
        if all(value is None for value in explicit):
            return None
        scale = _broadcast("shift_scale", self.shift_scale, self.dim, 1.0)
        shift = _broadcast("shift_offset", self.shift_offset, self.dim, 0.0)
        return DomainShiftSpec(
            scale=scale,
            shift=shift,
            warp_gamma=1.0 if self.warp_gamma is None else self.warp_gamma,
            noise_sigma=0.0 if self.noise_sigma is None else self.noise_sigma,
            label="explicit",
        )

    def to_dict(self) -> dict[str, Any]:
        snapshot = asdict(self)
        for key, value in snapshot.items():
            if isinstance(value, tuple):
                snapshot[key] = list(value)
        return snapshot


def _broadcast(key: str, values, dim: int, default: float) -> tuple[float, ...]:
    if values is None:
        return (default,) * dim
    if len(values) == 1:
        return tuple(values) * dim
    if len(values) != dim:
        raise ConfigurationError(key, f"{key} needs 1 or {dim} values, got {len(values)}")
    return tuple(values)


# (predicate, description) per key
RANGES: dict[str, tuple[typing.Callable[[Any], bool], str]] = {
    "seed": (lambda v: v >= 0, ">= 0"),
    "episodes": (lambda v: v >= 1, ">= 1"),
    "way": (lambda v: v >= 2, ">= 2"),
    "shot": (lambda v: v >= 1, ">= 1"),
    "query_per_class": (lambda v: v >= 1, ">= 1"),
    "extra_query_per_class": (lambda v: v >= 0, ">= 0"),
    "source_classes": (lambda v: v >= 2, ">= 2"),
    "target_classes": (lambda v: v >= 2, ">= 2"),
    "dim": (lambda v: v >= 1, ">= 1"),
    "source_per_class": (lambda v: v >= 1, ">= 1"),
    "target_per_class": (lambda v: v >= 1, ">= 1"),
    "cluster_spread": (lambda v: v > 0, "> 0"),
    "preset": (lambda v: v in PRESETS, f"one of {', '.join(PRESETS)}"),
    "shift_scale": (lambda v: v is None or (len(v) > 0 and min(v) > 0), "positive values"),
    "warp_gamma": (lambda v: v is None or v > 0, "> 0"),
    "noise_sigma": (lambda v: v is None or v >= 0, ">= 0"),
    "hidden_widths": (lambda v: len(v) > 0 and min(v) >= 1, "positive widths"),
    "pretrain_epochs": (lambda v: v >= 0, ">= 0"),
    "pretrain_lr": (lambda v: v >= 0, ">= 0"),
    "pretrain_batch_size": (lambda v: v >= 1, ">= 1"),
    "steps": (lambda v: v >= 1, ">= 1"),
    "max_epochs": (lambda v: v >= 0, ">= 0"),
    "batch_size": (lambda v: v >= 0, ">= 0"),
    "alpha": (lambda v: 0 < v <= 1, "in (0, 1]"),
    "gamma": (lambda v: 0 < v <= 1, "in (0, 1]"),
    "sigma": (lambda v: v is None or v >= 0, ">= 0"),
    "lr": (lambda v: v >= 0, ">= 0"),
    "prompt_lr_scale": (lambda v: v >= 0, ">= 0"),
    "momentum": (lambda v: 0 <= v < 1, "in [0, 1)"),
    "weight_decay": (lambda v: v >= 0, ">= 0"),
    "epsilon": (lambda v: v >= 0, ">= 0"),
    "ablation": (lambda v: v in {mode.value for mode in AblationMode}, "a known ablation mode"),
    "lp_neighbors": (lambda v: v >= 1, ">= 1"),
    "lp_alpha": (lambda v: 0 <= v <= 1, "in [0, 1]"),
    "lp_iterations": (lambda v: v >= 0, ">= 0"),
}


def _validate(config: RunConfig) -> None:
    for key, (check, description) in RANGES.items():
        value = getattr(config, key)
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigurationError(key, f"{key} must be finite, got {value}")
        if not check(value):
            raise ConfigurationError(key, f"{key} must be {description}, got {value!r}")
    if config.target_classes < config.way:
        raise ConfigurationError(
            "target_classes", f"{config.target_classes} target classes cannot host a {config.way}-way episode"
        )
    needed = config.shot + config.query_per_class + config.extra_query_per_class
    if config.target_per_class < needed:
        raise ConfigurationError(
            "target_per_class", f"episodes need {needed} samples per class, got {config.target_per_class}"
        )
    if config.max_epochs % config.steps:
        raise ConfigurationError(
            "max_epochs", f"max_epochs {config.max_epochs} is not a multiple of steps {config.steps}"
        )


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_scalar(key: str, kind: type, raw: str) -> Any:
    if kind is bool:
        lowered = raw.strip().lower()
        if lowered in {"1", "true", "yes", "on"}:
            return True
        if lowered in {"0", "false", "no", "off"}:
            return False
        raise ConfigurationError(key, f"{key} expects true or false, got {raw!r}")
    try:
        return kind(raw.strip())
    except ValueError:
        raise ConfigurationError(key, f"{key} expects {kind.__name__}, got {raw!r}") from None


def parse_value(key: str, raw: Any) -> Any:
    """Converts a text value (or an already typed one) to the field's type."""
    if key not in FIELD_TYPES:
        raise ConfigurationError(key, f"unknown configuration key {key!r}")
    kind = FIELD_TYPES[key]
    optional = False
    if isinstance(kind, types.UnionType):
        kind = next(arg for arg in typing.get_args(kind) if arg is not type(None))
        optional = True

    if raw is None or (isinstance(raw, str) and raw.strip() == ""):
        if optional:
            return None
        if kind is str:
            return ""
        raise ConfigurationError(key, f"{key} needs a value")

    if typing.get_origin(kind) is tuple:
        element = typing.get_args(kind)[0]
        items = raw.split(",") if isinstance(raw, str) else list(raw)
        return tuple(
            _parse_scalar(key, element, str(item)) for item in items if str(item).strip()
        )
    if isinstance(raw, str):
        return _parse_scalar(key, kind, raw)
    if kind is float and isinstance(raw, int | float) and not isinstance(raw, bool):
        return float(raw)
    if not isinstance(raw, kind) or (kind is int and isinstance(raw, bool)):
        raise ConfigurationError(key, f"{key} expects {kind.__name__}, got {raw!r}")
    return raw


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """
    Reads a key=value file (None means defaults only) and applies `overrides`
    on top, skipping override values that are None.

    Raises:
        ConfigurationError: Names the offending key.
    """
    values: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError("config", f"config file {path} not found")
        for key, raw in dotenv_values(path).items():
            values[key.strip().lower()] = parse_value(key.strip().lower(), raw)
    for key, raw in (overrides or {}).items():
        if raw is not None:
            values[key] = parse_value(key, raw)
    return RunConfig(**values)


def sweep_configs(config: RunConfig, key: str, values) -> list[RunConfig]:
    """
    One config per value. A step-size sweep rounds max_epochs up to the next
    multiple of each E so the schedule stays whole.
    """
    if key not in SWEEP_KEYS:
        raise ConfigurationError("sweep", f"cannot sweep {key!r}; options: {', '.join(SWEEP_KEYS)}")
    configs = []
    for raw in values:
        value = parse_value(key, raw)
        if key == "steps":
            if value < 1:
                raise ConfigurationError("steps", f"steps must be >= 1, got {value}")
            max_epochs = math.ceil(config.max_epochs / value) * value
            configs.append(replace(config, steps=value, max_epochs=max_epochs))
        else:
            configs.append(replace(config, **{key: value}))
    return configs


def parse_sweep(text: str) -> tuple[str, list[str]]:
    """'alpha=0.5,0.7' -> ('alpha', ['0.5', '0.7'])"""
    key, separator, listed = text.partition("=")
    if not separator or not listed.strip():
        raise ConfigurationError("sweep", f"sweep must look like key=v1,v2; got {text!r}")
    return key.strip(), [item.strip() for item in listed.split(",") if item.strip()]
