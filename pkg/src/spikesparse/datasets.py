"""MNIST (IDX) and CIFAR-10 (binary batch) loaders and the train/validation split.

Pixels are kept as the raw uint8 bytes and scaled by 1/255 on access, which
keeps a full CIFAR-10 training set at ~150 MB instead of 1.2 GB of float64.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_FILES = {
    "train": tuple(f"data_batch_{i}.bin" for i in range(1, 6)),
    "test": ("test_batch.bin",),
}


class DataFormatError(ValueError):
    """A dataset file is corrupt or inconsistent."""


@dataclass(frozen=True)
class LabeledImageSet:
    pixels: np.ndarray       # N x C x H x W, uint8
    labels: np.ndarray       # N, int64
    class_count: int

    def __post_init__(self):
        if self.pixels.dtype != np.uint8 or self.pixels.ndim != 4:
            raise DataFormatError("pixels must be an N x C x H x W uint8 array")
        if len(self.pixels) != len(self.labels):
            raise DataFormatError(f"{len(self.pixels)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DataFormatError(f"labels must lie in [0, {self.class_count})")
        for arr in (self.pixels, self.labels):
            arr.flags.writeable = False

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_shape(self) -> tuple[int, ...]:
        return tuple(self.pixels.shape[1:])

    @property
    def images(self) -> np.ndarray:
        """All images as float64 in [0, 1]."""
        return self.pixels / 255.0

    def batch(self, index) -> tuple[np.ndarray, np.ndarray]:
        return self.pixels[index] / 255.0, self.labels[index]

    def take(self, index) -> "LabeledImageSet":
        index = np.asarray(index, dtype=np.int64)
        return LabeledImageSet(self.pixels[index].copy(), self.labels[index].copy(), self.class_count)

    def head(self, n: int) -> "LabeledImageSet":
        return self.take(np.arange(min(n, len(self))))


@dataclass(frozen=True)
class SplitSpec:
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError(f"validation_fraction must lie in [0, 1), got {self.validation_fraction}")


def split(data: LabeledImageSet, spec: SplitSpec) -> tuple[LabeledImageSet, LabeledImageSet]:
    """Seeded shuffle; the first floor(N * (1 - fraction)) samples train."""
    train_idx, val_idx = split_indices(len(data), spec)
    return data.take(train_idx), data.take(val_idx)


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(spec.seed).permutation(n)
    # exact decimal arithmetic so 0.2 of 50000 is 10000, not 9999
    n_train = int(n * (1 - Fraction(repr(spec.validation_fraction))))
    return perm[:n_train], perm[n_train:]


# ---------------------------------------------------------------- IDX

def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise DataFormatError(f"{path}: corrupt gzip stream") from exc
    return raw


def decode_idx_images(raw: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(raw) < 16:
        raise DataFormatError(f"{source}: truncated IDX image header")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DataFormatError(f"{source}: bad IDX image magic 0x{magic:08x}")
    expected = 16 + n * rows * cols
    if len(raw) != expected:
        raise DataFormatError(f"{source}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, 1, rows, cols).copy()


def decode_idx_labels(raw: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(raw) < 8:
        raise DataFormatError(f"{source}: truncated IDX label header")
    magic, n = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise DataFormatError(f"{source}: bad IDX label magic 0x{magic:08x}")
    if len(raw) != 8 + n:
        raise DataFormatError(f"{source}: expected {8 + n} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=8).astype(np.int64)


def encode_idx_images(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels, dtype=np.uint8)
    n, rows, cols = pixels.shape[0], pixels.shape[-2], pixels.shape[-1]
    return struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + pixels.tobytes()


def encode_idx_labels(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels)
    return struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.astype(np.uint8).tobytes()


def load_mnist(images_path, labels_path) -> LabeledImageSet:
    """Decode a pair of (optionally gzipped) IDX files into 1x28x28 images."""
    pixels = decode_idx_images(_read_bytes(images_path), str(images_path))
    labels = decode_idx_labels(_read_bytes(labels_path), str(labels_path))
    if len(pixels) != len(labels):
        raise DataFormatError(
            f"count mismatch: {images_path} has {len(pixels)} images, {labels_path} has {len(labels)} labels")
    if len(labels) and labels.max() > 9:
        raise DataFormatError(f"{labels_path}: label {labels.max()} > 9")
    return LabeledImageSet(pixels, labels, 10)


# ---------------------------------------------------------------- CIFAR-10

def decode_cifar10(raw: bytes, source: str = "<bytes>") -> tuple[np.ndarray, np.ndarray]:
    if len(raw) % CIFAR_RECORD:
        raise DataFormatError(f"{source}: length {len(raw)} is not a multiple of {CIFAR_RECORD}")
    recs = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = recs[:, 0].astype(np.int64)
    if len(labels) and labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise DataFormatError(f"{source}: record {bad} has label byte {labels[bad]} > 9")
    return recs[:, 1:].reshape(-1, 3, 32, 32).copy(), labels


def encode_cifar10(pixels: np.ndarray, labels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels, dtype=np.uint8).reshape(len(labels), -1)
    recs = np.empty((len(labels), CIFAR_RECORD), dtype=np.uint8)
    recs[:, 0] = labels
    recs[:, 1:] = pixels
    return recs.tobytes()


def load_cifar10(batch_file_paths: Sequence[str | os.PathLike]) -> LabeledImageSet:
    """Concatenate CIFAR-10 binary batch files into 3x32x32 images."""
    pixels, labels = [np.empty((0, 3, 32, 32), np.uint8)], [np.empty(0, np.int64)]
    for path in batch_file_paths:
        p, l = decode_cifar10(_read_bytes(path), str(path))
        pixels.append(p)
        labels.append(l)
    return LabeledImageSet(np.concatenate(pixels), np.concatenate(labels), 10)


# ---------------------------------------------------------------- directories

def _find(data_dir: Path, name: str) -> Path:
    for cand in (name, name + ".gz", f"cifar-10-batches-bin/{name}"):
        if (data_dir / cand).is_file():
            return data_dir / cand
    raise FileNotFoundError(f"data file not found: {data_dir / name}")


def dataset_paths(dataset: str, data_dir, part: str = "train") -> list[Path]:
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise FileNotFoundError(f"data directory not found: {data_dir}")
    table = {"mnist": MNIST_FILES, "cifar10": CIFAR_FILES}.get(dataset)
    if table is None:
        raise ValueError(f"unknown dataset {dataset!r}")
    return [_find(data_dir, name) for name in table[part]]


def load_dataset(dataset: str, data_dir, part: str = "train") -> LabeledImageSet:
    paths = dataset_paths(dataset, data_dir, part)
    if dataset == "mnist":
        return load_mnist(*paths)
    return load_cifar10(paths)


def write_mnist(data_dir, pixels: np.ndarray, labels: Iterable[int], part: str = "train") -> None:
    """Write an IDX pair under the standard MNIST file names."""
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    img_name, lbl_name = MNIST_FILES[part]
    (data_dir / img_name).write_bytes(encode_idx_images(pixels))
    (data_dir / lbl_name).write_bytes(encode_idx_labels(np.asarray(list(labels))))
