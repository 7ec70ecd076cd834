"""Dataset readers (IDX, CIFAR binary), batching, subsampling and noise models.

Expected layout under the data directory (``$KAE_DATA_DIR`` unless given)::

    mnist/{train,t10k}-images-idx3-ubyte[.gz]
    mnist/{train,t10k}-labels-idx1-ubyte[.gz]
    fashion_mnist/...            same four IDX names as mnist
    cifar-10-batches-bin/data_batch_{1..5}.bin, test_batch.bin
    cifar-100-binary/train.bin, test.bin
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ndcore import RngStream, rng_normal

__all__ = [
    "Dataset",
    "DataFormatError",
    "load_idx",
    "load_cifar",
    "load_dataset",
    "data_dir",
    "batches",
    "add_gaussian_noise",
    "add_salt_pepper",
    "subsample",
    "DATASETS",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

DATASETS = ("mnist", "fashion_mnist", "cifar10", "cifar100")
_IDX_DIRS = {"mnist": "mnist", "fashion_mnist": "fashion_mnist"}


class DataFormatError(ValueError):
    """Raised for malformed dataset files."""


@dataclass
class Dataset:
    X: np.ndarray
    labels: np.ndarray
    name: str = ""
    split: str = "train"
    n_classes: int = field(default=0)

    def __post_init__(self):
        if self.X.ndim != 2 or self.labels.shape != (self.X.shape[0],):
            raise ValueError(f"X {self.X.shape} and labels {self.labels.shape} disagree")
        if not self.n_classes and self.labels.size:
            self.n_classes = int(self.labels.max()) + 1

    def __len__(self):
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def data_dir(path=None) -> Path:
    if path is not None:
        return Path(path)
    env = os.environ.get("KAE_DATA_DIR")
    if not env:
        raise FileNotFoundError("no data directory given and KAE_DATA_DIR is not set")
    return Path(env)


def _read_bytes(path: Path) -> bytes:
    if not path.exists():
        gz = path.with_name(path.name + ".gz")
        if gz.exists():
            path = gz
        else:
            raise FileNotFoundError(f"missing data file: {path}")
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def _parse_idx_images(raw: bytes, path) -> np.ndarray:
    if len(raw) < 16:
        raise DataFormatError(f"{path}: too short for an IDX image header")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DataFormatError(f"{path}: bad IDX image magic 0x{magic:08x}")
    expected = n * rows * cols
    if len(raw) - 16 != expected:
        raise DataFormatError(f"{path}: payload has {len(raw) - 16} bytes, header declares {expected}")
    return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, rows * cols)


def _parse_idx_labels(raw: bytes, path) -> np.ndarray:
    if len(raw) < 8:
        raise DataFormatError(f"{path}: too short for an IDX label header")
    magic, n = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise DataFormatError(f"{path}: bad IDX label magic 0x{magic:08x}")
    if len(raw) - 8 != n:
        raise DataFormatError(f"{path}: payload has {len(raw) - 8} labels, header declares {n}")
    return np.frombuffer(raw, dtype=np.uint8, offset=8)


def load_idx(images_path, labels_path, name: str = "", split: str = "train") -> Dataset:
    images_path, labels_path = Path(images_path), Path(labels_path)
    pixels = _parse_idx_images(_read_bytes(images_path), images_path)
    labels = _parse_idx_labels(_read_bytes(labels_path), labels_path)
    if pixels.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"count mismatch: {images_path} has {pixels.shape[0]} images, {labels_path} has {labels.shape[0]} labels")
    return Dataset(pixels.astype(np.float64) / 255.0, labels.astype(np.int64), name=name, split=split)


_CIFAR_FILES = {
    "cifar10": ("cifar-10-batches-bin", [f"data_batch_{i}.bin" for i in range(1, 6)], ["test_batch.bin"], 1, 10),
    "cifar100": ("cifar-100-binary", ["train.bin"], ["test.bin"], 2, 100),
}


def load_cifar(directory, variant: str = "cifar10", split: str = "train") -> Dataset:
    """Read CIFAR binary batches; pixels stay channel-major (R, G, B planes)."""
    if variant not in _CIFAR_FILES:
        raise ValueError(f"unknown CIFAR variant {variant!r}")
    sub, train_files, test_files, n_label_bytes, n_classes = _CIFAR_FILES[variant]
    root = Path(directory)
    if (root / sub).is_dir():
        root = root / sub
    stride = n_label_bytes + 3072
    xs, ys = [], []
    for fname in (train_files if split == "train" else test_files):
        path = root / fname
        if not path.is_file():
            raise FileNotFoundError(f"missing CIFAR batch file: {path}")
        raw = path.read_bytes()
        if len(raw) % stride:
            raise DataFormatError(f"{path}: size {len(raw)} is not a multiple of the {stride}-byte record stride")
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, stride)
        ys.append(rec[:, n_label_bytes - 1].astype(np.int64))  # fine label is the last label byte
        xs.append(rec[:, n_label_bytes:])
    X = np.concatenate(xs).astype(np.float64) / 255.0
    return Dataset(X, np.concatenate(ys), name=variant, split=split, n_classes=n_classes)


def load_dataset(name: str, split: str, directory=None) -> Dataset:
    root = data_dir(directory)
    if name in _IDX_DIRS:
        tag = "train" if split == "train" else "t10k"
        d = root / _IDX_DIRS[name]
        ds = load_idx(d / f"{tag}-images-idx3-ubyte", d / f"{tag}-labels-idx1-ubyte", name=name, split=split)
        ds.n_classes = 10
        return ds
    if name in _CIFAR_FILES:
        return load_cifar(root, name, split)
    raise ValueError(f"unknown dataset {name!r}; expected one of {DATASETS}")


def batches(ds, batch_size: int, stream: RngStream) -> list:
    """Seeded permutation of the rows split into batches (last one may be short)."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    X = ds.X if isinstance(ds, Dataset) else np.asarray(ds)
    order = stream.permutation(X.shape[0])
    return [X[order[i:i + batch_size]] for i in range(0, X.shape[0], batch_size)]


def add_gaussian_noise(X, sigma: float, stream: RngStream, clip: bool = False) -> np.ndarray:
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    X = np.asarray(X, dtype=np.float64)
    noisy = X + rng_normal(stream, 0.0, sigma, X.shape[0], X.shape[1])
    if clip:
        np.clip(noisy, 0.0, 1.0, out=noisy)
    return noisy


def add_salt_pepper(X, prob: float, stream: RngStream) -> np.ndarray:
    """Replace each entry with probability ``prob`` by 0 or 1 (even odds)."""
    if not 0.0 <= prob <= 1.0:
        raise ValueError(f"prob must lie in [0, 1], got {prob}")
    X = np.asarray(X, dtype=np.float64)
    u = stream.random((2,) + X.shape)
    hit = u[0] < prob
    out = X.copy()
    out[hit] = (u[1][hit] < 0.5).astype(np.float64)
    return out


def subsample(ds: Dataset, k: int, stream: RngStream) -> Dataset:
    if k > len(ds):
        raise ValueError(f"cannot draw {k} rows from a dataset of {len(ds)}")
    idx = stream.permutation(len(ds))[:k]
    return Dataset(ds.X[idx], ds.labels[idx], name=ds.name, split=ds.split, n_classes=ds.n_classes)
