"""Dataset loaders (MNIST IDX, CIFAR-10 binary) and preprocessing ops.

Loaders only read local files. ``scripts/fetch_data.py`` populates a data
root; an optional JSON manifest ``{filename: sha256}`` is verified on load.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import DataError, ValidationError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR10_FILES = {
    "train": [f"data_batch_{i}.bin" for i in range(1, 6)],
    "test": ["test_batch.bin"],
}
CIFAR10_ROW = 1 + 3 * 32 * 32
CIFAR10_BATCH_BYTES = 10_000 * CIFAR10_ROW
LUMINANCE = (0.299, 0.587, 0.114)


@dataclass
class Dataset:
    samples: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self) -> None:
        if len(self.samples) != len(self.labels):
            raise DataError(f"{len(self.samples)} samples but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DataError("labels outside [0, class_count)")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> tuple[np.ndarray, int]:
        return self.samples[i], int(self.labels[i])

    def subset(self, indices: Iterable[int]) -> "Dataset":
        idx = np.asarray(list(indices), dtype=np.int64)
        return Dataset(self.samples[idx], self.labels[idx], self.class_count)

    def head(self, n: int) -> "Dataset":
        return Dataset(self.samples[:n], self.labels[:n], self.class_count)

    def select_classes(self, classes: Sequence[int]) -> "Dataset":
        """Keep only ``classes`` (in file order) and relabel them 0..len(classes)-1."""
        classes = list(classes)
        lookup = np.full(self.class_count, -1)
        lookup[classes] = np.arange(len(classes))
        keep = np.isin(self.labels, classes)
        return Dataset(self.samples[keep], lookup[self.labels[keep]], len(classes))

    def shuffled(self, rng: np.random.Generator) -> "Dataset":
        return self.subset(rng.permutation(len(self)))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def verify_manifest(directory, manifest: str | os.PathLike | dict[str, str]) -> None:
    directory = Path(directory)
    if not isinstance(manifest, dict):
        try:
            manifest = json.loads(Path(manifest).read_text())
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read manifest {manifest}: {exc}") from None
    for name, digest in manifest.items():
        path = directory / name
        if not path.exists():
            raise DataError(f"manifest lists missing file {path}")
        if sha256_file(path) != digest:
            raise DataError(f"SHA-256 mismatch for {path}")


def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def parse_idx_images(data: bytes) -> np.ndarray:
    if len(data) < 16:
        raise DataError("IDX image file truncated in header")
    magic, count, rows, cols = np.frombuffer(data, dtype=">u4", count=4)
    if magic != IDX_IMAGES_MAGIC:
        raise DataError(f"bad IDX image magic 0x{int(magic):08x}")
    need = 16 + int(count) * int(rows) * int(cols)
    if len(data) < need:
        raise DataError(f"IDX image payload truncated: {len(data)} of {need} bytes")
    return np.frombuffer(data, dtype=np.uint8, count=need - 16, offset=16).reshape(int(count), int(rows), int(cols))


def parse_idx_labels(data: bytes) -> np.ndarray:
    if len(data) < 8:
        raise DataError("IDX label file truncated in header")
    magic, count = np.frombuffer(data, dtype=">u4", count=2)
    if magic != IDX_LABELS_MAGIC:
        raise DataError(f"bad IDX label magic 0x{int(magic):08x}")
    if len(data) < 8 + int(count):
        raise DataError("IDX label payload truncated")
    return np.frombuffer(data, dtype=np.uint8, count=int(count), offset=8)


def load_mnist(directory, split: str = "train", manifest=None) -> Dataset:
    """MNIST split as float images in [0, 255] of shape (N, 28, 28)."""
    directory = Path(directory)
    if split not in MNIST_FILES:
        raise ValidationError(f"unknown split {split!r}")
    if manifest is not None:
        verify_manifest(directory, manifest)
    img_name, lbl_name = MNIST_FILES[split]
    images = parse_idx_images(_read(directory / img_name))
    labels = parse_idx_labels(_read(directory / lbl_name))
    if len(images) != len(labels):
        raise DataError(f"{len(images)} images but {len(labels)} labels")
    return Dataset(images.astype(np.float64), labels.astype(np.int64), 10)


def parse_cifar10_batch(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(data) != CIFAR10_BATCH_BYTES:
        raise DataError(f"CIFAR-10 batch has {len(data)} bytes, expected {CIFAR10_BATCH_BYTES}")
    rows = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR10_ROW)
    return rows[:, 1:].reshape(-1, 3, 32, 32), rows[:, 0]


def load_cifar10(directory, split: str = "train", manifest=None) -> Dataset:
    """CIFAR-10 split as float images in [0, 255] of shape (N, 3, 32, 32)."""
    directory = Path(directory)
    if split not in CIFAR10_FILES:
        raise ValidationError(f"unknown split {split!r}")
    if manifest is not None:
        verify_manifest(directory, manifest)
    parts = [parse_cifar10_batch(_read(directory / name)) for name in CIFAR10_FILES[split]]
    images = np.concatenate([p[0] for p in parts])
    labels = np.concatenate([p[1] for p in parts])
    if labels.max() > 9:
        raise DataError("CIFAR-10 label byte above 9")
    return Dataset(images.astype(np.float64), labels.astype(np.int64), 10)


def grayscale(sample: np.ndarray, weights: Sequence[float] = LUMINANCE) -> np.ndarray:
    """(3, H, W) colour image to (H, W) luminance."""
    if sample.ndim != 3 or sample.shape[0] != 3:
        raise ValidationError("grayscale expects a (3, H, W) image")
    return np.tensordot(np.asarray(weights, dtype=np.float64), sample, axes=1)


def crop(sample: np.ndarray, top: int, left: int, height: int, width: int) -> np.ndarray:
    h, w = sample.shape[-2:]
    if top < 0 or left < 0 or height < 1 or width < 1 or top + height > h or left + width > w:
        raise ValidationError(f"crop ({top}, {left}, {height}, {width}) outside {h}x{w} image")
    return sample[..., top : top + height, left : left + width]


def subsample(sample: np.ndarray, k: int) -> np.ndarray:
    """Keep every ``k``-th pixel along both spatial axes, starting at 0."""
    if k < 1:
        raise ValidationError("subsample factor must be >= 1")
    return sample[..., ::k, ::k]


def binarize(sample: np.ndarray, threshold: float = 0.0) -> np.ndarray:
    return (sample > threshold).astype(np.float64)


PREPROCESS_OPS = {"crop": crop, "subsample": subsample, "binarize": binarize, "grayscale": grayscale}


def preprocess(sample: np.ndarray, ops: Sequence[dict[str, Any]]) -> np.ndarray:
    """Apply ops such as ``{"op": "crop", "top": 2, ...}`` in order."""
    out = np.asarray(sample)
    for spec in ops:
        spec = dict(spec)
        name = spec.pop("op", None)
        if name not in PREPROCESS_OPS:
            raise ValidationError(f"unknown preprocess op {name!r}")
        out = PREPROCESS_OPS[name](out, **spec)
    return out
