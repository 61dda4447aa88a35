"""
The `SPTD` dataset file, little-endian: magic "SPTD", version u32 = 1, m u32,
dim u32, class_count u32, then m*dim f64 features row-major and m u32 labels.
"""

import struct
from pathlib import Path

import numpy as np

from errors import DatasetFormatError
from ingest.synthetic import LabeledDataset

DATASET_MAGIC = b"SPTD"
DATASET_VERSION = 1
HEADER = struct.Struct("<4sIIII")


def save_dataset(path: str | Path, data: LabeledDataset) -> None:
    header = HEADER.pack(DATASET_MAGIC, DATASET_VERSION, data.size, data.dim, data.class_count)
    body = data.features.astype("<f8").tobytes() + data.labels.astype("<u4").tobytes()
    Path(path).write_bytes(header + body)


def load_dataset(path: str | Path, class_offset: int = 0) -> LabeledDataset:
    """Inverse of `save_dataset`. Bad files raise DatasetFormatError with a byte offset."""
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise DatasetFormatError("dataset header truncated", len(data))

    magic, version, m, dim, class_count = HEADER.unpack_from(data, 0)
    if magic != DATASET_MAGIC:
        raise DatasetFormatError(f"bad dataset magic {magic!r}", 0)
    if version != DATASET_VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version}", 4)

    feature_bytes = 8 * m * dim
    expected = HEADER.size + feature_bytes + 4 * m
    if len(data) < expected:
        raise DatasetFormatError(
            f"dataset body truncated: expected {expected} bytes, found {len(data)}",
            len(data),
        )
    if len(data) > expected:
        raise DatasetFormatError("trailing bytes after the labels", expected)

    features = np.frombuffer(data, dtype="<f8", count=m * dim, offset=HEADER.size)
    labels_offset = HEADER.size + feature_bytes
    labels = np.frombuffer(data, dtype="<u4", count=m, offset=labels_offset)
    if m and int(labels.max()) >= class_count:
        bad = int(np.argmax(labels >= class_count))
        raise DatasetFormatError(
            f"label {int(labels[bad])} out of range for {class_count} classes",
            labels_offset + 4 * bad,
        )

    return LabeledDataset(
        features.reshape(m, dim).astype(np.float64),
        labels.astype(np.int64),
        class_count,
        class_offset,
    )
