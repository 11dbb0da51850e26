"""Dataset ingestion: IDX-format image/label files, synthetic blobs, batching."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class DataFormatError(ValueError):
    """Base for IDX parsing failures."""


class BadMagicError(DataFormatError):
    pass


class TruncatedFileError(DataFormatError):
    pass


class CountMismatchError(DataFormatError):
    pass


@dataclass
class Dataset:
    """images: features x samples in [0, 1]; labels: ints in [0, n_classes)."""

    images: np.ndarray
    labels: np.ndarray
    split: str = ""

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 2:
            raise ValueError("images must be features x samples")
        if self.images.shape[1] != self.labels.shape[0]:
            raise CountMismatchError(
                f"{self.images.shape[1]} images but {self.labels.shape[0]} labels"
            )

    @property
    def n_samples(self) -> int:
        return self.images.shape[1]

    @property
    def n_features(self) -> int:
        return self.images.shape[0]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian blob task: one seeded random center per class."""

    classes: int = 10
    features: int = 784
    samples_per_class: int = 128
    cluster_std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.classes, self.features, self.samples_per_class) < 1:
            raise ValueError("classes, features and samples_per_class must be >= 1")
        if self.cluster_std < 0:
            raise ValueError("cluster_std must be >= 0")


def _read_be32(f, what: str) -> int:
    buf = f.read(4)
    if len(buf) != 4:
        raise TruncatedFileError(f"truncated {what}")
    return struct.unpack(">I", buf)[0]


def load_idx(path_images, path_labels, split: str = "") -> Dataset:
    """Parse big-endian IDX image/label files; pixels scaled by 1/255."""
    with open(path_images, "rb") as f:
        magic = _read_be32(f, "image header")
        if magic != IDX_IMAGE_MAGIC:
            raise BadMagicError(f"image file magic 0x{magic:08x} != 0x{IDX_IMAGE_MAGIC:08x}")
        count = _read_be32(f, "image header")
        rows = _read_be32(f, "image header")
        cols = _read_be32(f, "image header")
        buf = f.read(count * rows * cols)
        if len(buf) != count * rows * cols:
            raise TruncatedFileError(
                f"image file holds {len(buf)} pixel bytes, expected {count * rows * cols}"
            )
        pixels = np.frombuffer(buf, dtype=np.uint8).reshape(count, rows * cols)

    with open(path_labels, "rb") as f:
        magic = _read_be32(f, "label header")
        if magic != IDX_LABEL_MAGIC:
            raise BadMagicError(f"label file magic 0x{magic:08x} != 0x{IDX_LABEL_MAGIC:08x}")
        label_count = _read_be32(f, "label header")
        buf = f.read(label_count)
        if len(buf) != label_count:
            raise TruncatedFileError(f"label file holds {len(buf)} labels, expected {label_count}")
        labels = np.frombuffer(buf, dtype=np.uint8)

    if label_count != count:
        raise CountMismatchError(f"{count} images but {label_count} labels")
    return Dataset(pixels.T.astype(np.float64) / 255.0, labels.astype(np.int64), split)


def write_idx(dataset: Dataset, path_images, path_labels, image_side: int | None = None) -> None:
    """Write a dataset back out in IDX layout (pixels rescaled by 255)."""
    n = dataset.n_samples
    feats = dataset.n_features
    if image_side is None:
        image_side = int(round(np.sqrt(feats)))
    if image_side * image_side != feats:
        raise ValueError(f"{feats} features is not a square image; pass image_side")
    pixels = np.clip(np.rint(dataset.images.T * 255.0), 0, 255).astype(np.uint8)
    with open(path_images, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, image_side, image_side))
        f.write(pixels.tobytes())
    with open(path_labels, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def idx_sample_count(path_images) -> int:
    """Sample count from an IDX image header alone (for cost-only runs)."""
    with open(path_images, "rb") as f:
        magic = _read_be32(f, "image header")
        if magic != IDX_IMAGE_MAGIC:
            raise BadMagicError(f"image file magic 0x{magic:08x} != 0x{IDX_IMAGE_MAGIC:08x}")
        return _read_be32(f, "image header")


def synthetic(spec: SyntheticSpec, split: str = "train") -> Dataset:
    """Gaussian blobs with class centers on a seeded random simplex,
    rescaled into [0, 1]; linearly separable at low cluster_std.

    Centers depend on the seed alone, so splits drawn with the same seed
    share the task and differ only in their sample noise.
    """
    from .numerics import derive_rng

    centers_rng = derive_rng(spec.seed, "synthetic-centers")
    noise_rng = derive_rng(spec.seed, "synthetic-noise", split)
    centers = centers_rng.uniform(0.25, 0.75, size=(spec.classes, spec.features))
    images = np.empty((spec.features, spec.classes * spec.samples_per_class))
    labels = np.empty(spec.classes * spec.samples_per_class, dtype=np.int64)
    col = 0
    for cls in range(spec.classes):
        block = centers[cls][:, None] + noise_rng.normal(
            0.0, spec.cluster_std, size=(spec.features, spec.samples_per_class))
        images[:, col : col + spec.samples_per_class] = block
        labels[col : col + spec.samples_per_class] = cls
        col += spec.samples_per_class
    np.clip(images, 0.0, 1.0, out=images)
    return Dataset(images, labels, split)


def batches(ds: Dataset, batch_size: int, rng: np.random.Generator):
    """Yield (images, labels) batches in a seeded shuffled order.

    One Fisher-Yates shuffle per call (i.e. per epoch); the final short
    batch is kept.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = rng.permutation(ds.n_samples)
    for start in range(0, ds.n_samples, batch_size):
        idx = order[start : start + batch_size]
        yield ds.images[:, idx], ds.labels[idx]
