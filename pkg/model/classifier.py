from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from engine.tape import Parameter, Tape, Tensor
from model.backbone import FrozenBackbone
from model.prompt import StylePrompt, TargetStats, apply_style_prompt

Array = npt.NDArray[np.float64]


class LinearClassifier:
    """psi: features (dm) -> logits (N). Starts at zero, so predictions start uniform."""

    def __init__(self, weight, bias):
        self.weight = Parameter(weight, name="classifier.weight")
        self.bias = Parameter(bias, name="classifier.bias")

    @classmethod
    def zeros(cls, feature_dim: int, way: int) -> "LinearClassifier":
        return cls(np.zeros((feature_dim, way)), np.zeros(way))

    @property
    def way(self) -> int:
        return self.bias.shape[0]

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]

    def logits(self, tape: Tape, features: Tensor) -> Tensor:
        projected = tape.apply("matmul", features, tape.watch(self.weight))
        return tape.apply("add_bias", projected, tape.watch(self.bias))


@dataclass
class PromptedModel:
    """
    p = psi . theta . omega. With `prompt` None the raw input goes straight into
    the backbone, which is how the prompt-free modes run.
    """

    backbone: FrozenBackbone
    classifier: LinearClassifier
    stats: TargetStats
    prompt: StylePrompt | None = None

    def prompted_input(self, tape: Tape, x) -> Tensor:
        if self.prompt is None:
            return x if isinstance(x, Tensor) else Tensor(x)
        return apply_style_prompt(tape, x, self.stats, self.prompt)

    def features(self, tape: Tape, x) -> Tensor:
        return self.backbone.features(tape, self.prompted_input(tape, x))

    def probabilities(self, tape: Tape, x) -> Tensor:
        logits = self.classifier.logits(tape, self.features(tape, x))
        return tape.apply("softmax", logits)

    def predict(self, x) -> Array:
        return predict(x, self.stats, self.prompt, self.backbone, self.classifier)


def predict(
    x,
    stats: TargetStats,
    prompt: StylePrompt | None,
    backbone: FrozenBackbone,
    classifier: LinearClassifier,
) -> Array:
    """softmax(psi(theta(omega(x)))) for a single sample or a batch of rows."""
    values = np.asarray(x, dtype=np.float64)
    single = values.ndim == 1
    rows = values.reshape(1, -1) if single else values
    model = PromptedModel(backbone, classifier, stats, prompt)
    probabilities = model.probabilities(Tape(), rows).values
    return probabilities[0] if single else probabilities
