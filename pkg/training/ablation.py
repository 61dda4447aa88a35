"""
The ablation switchboard. Each mode is a config rewrite plus a set of
behaviour switches the episode runner reads.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING

from errors import ConfigurationError

if TYPE_CHECKING:
    from harness.config import RunConfig


class AblationMode(str, Enum):
    FULL = "full"
    NO_STEP = "no_step"
    NO_STYLE = "no_style"
    ENTROPY_GROUP_ONLY = "entropy_group_only"
    PROTOTYPE_GROUP_ONLY = "prototype_group_only"
    NO_MI = "no_mi"
    NO_KL = "no_kl"
    NO_LABEL_PROPAGATION = "no_label_propagation"
    # frozen backbone, classifier trained on support cross-entropy only
    CE_ONLY = "ce_only"

    @classmethod
    def parse(cls, value: "str | AblationMode") -> "AblationMode":
        try:
            return cls(value)
        except ValueError:
            options = ", ".join(mode.value for mode in cls)
            raise ConfigurationError(
                "ablation", f"unknown ablation mode {value!r}; options: {options}"
            ) from None


@dataclass(frozen=True)
class Switches:
    style_prompt: bool = True
    external_phase: bool = True
    credible_rule: str = "both"
    use_mi: bool = True
    label_propagation: bool = True


def apply_ablation(mode: "str | AblationMode", config: "RunConfig") -> tuple["RunConfig", Switches]:
    """
    Returns the config the mode runs with and the switches it sets.

    no_step collapses the schedule to one step holding every internal epoch;
    no_style drops the prompt and sends the external gradient to the classifier.
    """
    mode = AblationMode.parse(mode)
    config = replace(config, ablation=mode.value)

    if mode is AblationMode.NO_STEP:
        return replace(config, steps=1), Switches()
    if mode is AblationMode.NO_STYLE:
        return config, Switches(style_prompt=False)
    if mode is AblationMode.ENTROPY_GROUP_ONLY:
        return config, Switches(credible_rule="entropy")
    if mode is AblationMode.PROTOTYPE_GROUP_ONLY:
        return config, Switches(credible_rule="prototype")
    if mode is AblationMode.NO_MI:
        return config, Switches(use_mi=False)
    if mode is AblationMode.NO_KL:
        return replace(config, sigma=0.0), Switches()
    if mode is AblationMode.NO_LABEL_PROPAGATION:
        return config, Switches(label_propagation=False)
    if mode is AblationMode.CE_ONLY:
        return config, Switches(style_prompt=False, external_phase=False)
    return config, Switches()
