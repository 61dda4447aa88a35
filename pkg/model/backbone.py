"""
The frozen feature extractor, its stand-in pretraining on the source task, and
the `SPTM` checkpoint format.

Checkpoint layout, little-endian: magic "SPTM", version u32, layer count u32,
then per layer rows u32, cols u32, rows*cols f64 weights row-major and cols
f64 biases.
"""

import hashlib
import logging
import struct
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from engine.tape import Parameter, Tape, Tensor
from errors import ConfigurationError, ContractError, DatasetFormatError, DimensionError
from ingest.synthetic import LabeledDataset
from objectives.supervised import cross_entropy_loss
from training.optim import SGDState, sgd_update

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SPTM"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class BackboneSpec:
    input_dim: int
    hidden_widths: tuple[int, ...] = (64, 64, 64)

    def __post_init__(self):
        if self.input_dim < 1 or not self.hidden_widths or min(self.hidden_widths) < 1:
            raise ContractError(f"invalid backbone spec {self}")

    @property
    def feature_dim(self) -> int:
        return self.hidden_widths[-1]


@dataclass(frozen=True)
class DenseLayer:
    weight: Tensor  # (rows = inputs, cols = outputs)
    bias: Tensor


@dataclass(frozen=True)
class FrozenBackbone:
    """ReLU MLP whose weights are immutable tensors. Shared read-only across workers."""

    layers: tuple[DenseLayer, ...]

    def __post_init__(self):
        if not self.layers:
            raise ContractError("a backbone needs at least one layer")
        for previous, layer in zip(self.layers, self.layers[1:]):
            if previous.weight.shape[1] != layer.weight.shape[0]:
                raise DimensionError(
                    f"layer widths do not chain: {previous.weight.shape} -> {layer.weight.shape}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.layers[-1].weight.shape[1]

    def features(self, tape: Tape, x) -> Tensor:
        """Gradient flows through to `x`; the weights enter as constants."""
        hidden = x
        for layer in self.layers:
            hidden = tape.apply("matmul", hidden, layer.weight)
            hidden = tape.apply("add_bias", hidden, layer.bias)
            hidden = tape.apply("relu", hidden)
        return hidden

    def digest(self) -> str:
        """sha256 over every weight and bias, for bit-exact freezing checks."""
        sha = hashlib.sha256()
        for layer in self.layers:
            sha.update(layer.weight.values.tobytes())
            sha.update(layer.bias.values.tobytes())
        return sha.hexdigest()


def _initial_parameters(spec: BackboneSpec, rng: np.random.Generator) -> list[Parameter]:
    parameters = []
    fan_in = spec.input_dim
    for index, width in enumerate(spec.hidden_widths):
        # He initialisation for ReLU layers
        weight = rng.normal(scale=np.sqrt(2.0 / fan_in), size=(fan_in, width))
        parameters.append(Parameter(weight, name=f"layer{index}.weight"))
        parameters.append(Parameter(np.zeros(width), name=f"layer{index}.bias"))
        fan_in = width
    return parameters


def _freeze(parameters: list[Parameter]) -> FrozenBackbone:
    layers = tuple(
        DenseLayer(weight=Tensor(weight.values), bias=Tensor(bias.values))
        for weight, bias in zip(parameters[::2], parameters[1::2], strict=True)
    )
    return FrozenBackbone(layers)


def pretrain_and_freeze(
    source: LabeledDataset,
    spec: BackboneSpec,
    epochs: int,
    seed: int,
    learning_rate: float = 0.05,
    batch_size: int = 50,
    target_class_ids: Iterable[int] | None = None,
) -> FrozenBackbone:
    """
    Trains the backbone plus a throwaway source head with mini-batch SGD and
    cross-entropy, then freezes the backbone and discards the head.

    Args:
        source: Labelled source data.
        spec: Layer widths. `spec.input_dim` must match the source features.
        epochs: Passes over the source data. 0 returns the seeded initialisation.
        seed: Drives initialisation and batch order.
        target_class_ids: Global ids of the target classes; must not overlap
            the source's.

    Returns:
        FrozenBackbone: Deterministic for a fixed seed.
    """
    if target_class_ids is not None:
        overlap = set(source.class_ids) & set(target_class_ids)
        if overlap:
            raise ConfigurationError(
                "target_classes",
                f"source and target label spaces overlap on {sorted(overlap)[:5]}",
            )
    if source.dim != spec.input_dim:
        raise DimensionError(
            f"source features have {source.dim} channels, backbone expects {spec.input_dim}"
        )
    if epochs < 0 or batch_size < 1:
        raise ContractError("epochs must be >= 0 and batch_size >= 1")

    rng = np.random.default_rng(seed)
    parameters = _initial_parameters(spec, rng)
    head_weight = Parameter(
        rng.normal(scale=np.sqrt(1.0 / spec.feature_dim), size=(spec.feature_dim, source.class_count)),
        name="source_head.weight",
    )
    head_bias = Parameter(np.zeros(source.class_count), name="source_head.bias")
    trainable = [*parameters, head_weight, head_bias]
    optimizer = SGDState(learning_rate=learning_rate, momentum=0.9, weight_decay=0.0)

    for epoch in range(epochs):
        order = rng.permutation(source.size)
        for start in range(0, source.size, batch_size):
            batch = order[start : start + batch_size]
            tape = Tape()
            hidden = Tensor(source.features[batch])
            for weight, bias in zip(parameters[::2], parameters[1::2], strict=True):
                hidden = tape.apply("matmul", hidden, tape.watch(weight))
                hidden = tape.apply("add_bias", hidden, tape.watch(bias))
                hidden = tape.apply("relu", hidden)
            logits = tape.apply("matmul", hidden, tape.watch(head_weight))
            logits = tape.apply("add_bias", logits, tape.watch(head_bias))
            probabilities = tape.apply("softmax", logits)
            loss = cross_entropy_loss(tape, probabilities, source.labels[batch])
            loss = tape.apply("scale", loss, factor=1.0 / len(batch))
            tape.backward(loss)
            sgd_update(optimizer, trainable)
        logger.debug("Pretraining epoch %d/%d finished", epoch + 1, epochs)

    backbone = _freeze(parameters)
    if source.size:
        tape = Tape()
        features = backbone.features(tape, Tensor(source.features))
        logits = features.values @ head_weight.values + head_bias.values
        accuracy = float(np.mean(np.argmax(logits, axis=1) == source.labels))
        logger.info(
            "Pretrained backbone for %d epochs: source accuracy %.3f (chance %.3f)",
            epochs,
            accuracy,
            1.0 / source.class_count,
        )
    return backbone


def save_backbone(path: str | Path, backbone: FrozenBackbone) -> None:
    chunks = [struct.pack("<4sII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(backbone.layers))]
    for layer in backbone.layers:
        rows, cols = layer.weight.shape
        chunks.append(struct.pack("<II", rows, cols))
        chunks.append(layer.weight.values.astype("<f8").tobytes())
        chunks.append(layer.bias.values.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_backbone(path: str | Path) -> FrozenBackbone:
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise DatasetFormatError("checkpoint header truncated", len(data))
    magic, version, layer_count = struct.unpack_from("<4sII", data, 0)
    if magic != CHECKPOINT_MAGIC:
        raise DatasetFormatError(f"bad checkpoint magic {magic!r}", 0)
    if version != CHECKPOINT_VERSION:
        raise DatasetFormatError(f"unsupported checkpoint version {version}", 4)
    if layer_count == 0:
        raise DatasetFormatError("checkpoint has no layers", 8)

    offset = 12
    layers = []
    for _ in range(layer_count):
        if len(data) < offset + 8:
            raise DatasetFormatError("layer header truncated", len(data))
        rows, cols = struct.unpack_from("<II", data, offset)
        offset += 8
        needed = 8 * (rows * cols + cols)
        if len(data) < offset + needed:
            raise DatasetFormatError(
                f"layer body truncated: expected {needed} bytes", len(data)
            )
        weight = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=offset)
        offset += 8 * rows * cols
        bias = np.frombuffer(data, dtype="<f8", count=cols, offset=offset)
        offset += 8 * cols
        layers.append(
            DenseLayer(weight=Tensor(weight.reshape(rows, cols)), bias=Tensor(bias))
        )
    if offset != len(data):
        raise DatasetFormatError("trailing bytes after the last layer", offset)
    try:
        return FrozenBackbone(tuple(layers))
    except DimensionError as error:
        raise DatasetFormatError(str(error), 12) from error
