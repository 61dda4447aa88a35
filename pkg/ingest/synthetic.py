import logging
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from errors import ContractError, DimensionError

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """
    Features (m x d) with local labels in [0, class_count). `class_offset`
    places the classes in a global label space so source and target can be
    checked for disjointness; it is not part of the dataset file.
    """

    features: Array
    labels: npt.NDArray[np.int64]
    class_count: int
    class_offset: int = 0

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if features.ndim != 2 or labels.shape != (features.shape[0],):
            raise DimensionError(
                f"features {features.shape} and labels {labels.shape} do not line up"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ContractError(f"labels must lie in [0, {self.class_count})")
        features.setflags(write=False)
        labels.setflags(write=False)
        # Frozen dataclass: normalise the arrays in place of the originals.
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def class_ids(self) -> range:
        return range(self.class_offset, self.class_offset + self.class_count)

    def class_counts(self) -> npt.NDArray[np.int64]:
        return np.bincount(self.labels, minlength=self.class_count)


@dataclass(frozen=True)
class DomainShiftSpec:
    """
    Per-channel style change: scale and shift, a power warp on standardised
    values, and additive Gaussian noise.
    """

    scale: tuple[float, ...]
    shift: tuple[float, ...]
    warp_gamma: float = 1.0
    noise_sigma: float = 0.0
    # Filled by presets for provenance only
    label: str = field(default="explicit", compare=False)

    def __post_init__(self):
        if len(self.scale) != len(self.shift):
            raise DimensionError(
                f"scale has {len(self.scale)} channels, shift has {len(self.shift)}"
            )
        if any(s <= 0 for s in self.scale):
            raise ContractError("domain shift scale must be positive in every channel")
        if self.warp_gamma <= 0:
            raise ContractError(f"warp_gamma must be positive, got {self.warp_gamma}")
        if self.noise_sigma < 0:
            raise ContractError(f"noise_sigma must be non-negative, got {self.noise_sigma}")

    @classmethod
    def identity(cls, dim: int) -> "DomainShiftSpec":
        return cls(scale=(1.0,) * dim, shift=(0.0,) * dim)

    @property
    def channels(self) -> int:
        return len(self.scale)


def generate_source_dataset(
    class_count: int,
    dim: int,
    per_class: int,
    cluster_spread: float,
    seed: int,
    class_offset: int = 0,
) -> LabeledDataset:
    """
    Gaussian clusters around seeded class centres, `per_class` samples each,
    ordered class by class. The target domain is drawn with the same generator
    and a different seed, so its class centres are a separate draw.
    """
    if class_count < 2 or per_class < 1 or dim < 1:
        raise ContractError("need class_count >= 2, per_class >= 1 and dim >= 1")
    if cluster_spread < 0:
        raise ContractError(f"cluster_spread must be non-negative, got {cluster_spread}")

    rng = np.random.default_rng(seed)
    centres = rng.normal(size=(class_count, dim))
    labels = np.repeat(np.arange(class_count), per_class)
    noise = rng.normal(size=(class_count * per_class, dim))
    features = centres[labels] + cluster_spread * noise

    logger.debug(
        "Generated %d samples over %d classes (dim %d, seed %d)",
        features.shape[0],
        class_count,
        dim,
        seed,
    )
    return LabeledDataset(features, labels, class_count, class_offset)


def apply_domain_shift(data: LabeledDataset, spec: DomainShiftSpec, seed: int) -> LabeledDataset:
    """
    Per channel c, in the channel's own units:
    x' = mean_c + std_c * scale_c * sign(z) * |z|^gamma + shift_c + noise,
    with z the channel-standardised value. The identity spec reproduces the
    input up to the standardise/de-standardise round trip.
    """
    if spec.channels != data.dim:
        raise DimensionError(
            f"shift spec has {spec.channels} channels, data has {data.dim}"
        )
    if data.size == 0:
        return data

    features = data.features
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    # Constant channels have nothing to standardise.
    z = np.divide(features - mean, std, out=np.zeros_like(features), where=std > 0)
    warped = np.sign(z) * np.abs(z) ** spec.warp_gamma
    shifted = mean + std * np.asarray(spec.scale) * warped + np.asarray(spec.shift)

    if spec.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        shifted = shifted + spec.noise_sigma * rng.normal(size=shifted.shape)

    return LabeledDataset(shifted, data.labels, data.class_count, data.class_offset)
