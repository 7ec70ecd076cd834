"""Dense float64 matrix helpers and labelled, seedable random streams.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64, one sample
per row. The helpers here add the shape checks the rest of the package relies
on; hot loops call numpy directly.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

__all__ = [
    "RngStream",
    "as_matrix",
    "matmul",
    "elementwise_pow",
    "add_row_broadcast",
    "mean_all",
    "rng_uniform",
    "rng_normal",
    "derive_seed",
]


def as_matrix(a, name: str = "array") -> np.ndarray:
    """Return ``a`` as a C-contiguous 2-D float64 array."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def elementwise_pow(a, i: int) -> np.ndarray:
    if i < 0:
        raise ValueError(f"power must be non-negative, got {i}")
    a = as_matrix(a, "a")
    if i == 0:
        return np.ones_like(a)
    if i == 1:
        return a.copy()
    out = a.copy()
    for _ in range(i - 1):
        out *= a
    return out


def add_row_broadcast(a, v) -> np.ndarray:
    a = as_matrix(a, "a")
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.shape[0] != a.shape[1]:
        raise ValueError(f"vector length {v.shape[0]} does not match {a.shape[1]} columns")
    return a + v


def mean_all(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        raise ValueError("mean of an empty matrix")
    return float(a.sum() / a.size)


def derive_seed(master_seed: int, label: str) -> int:
    """Map ``(master_seed, label)`` to a 64-bit seed via SHA-256.

    The digest of ``"<master_seed>/<label>"`` is read as a little-endian
    integer, so each concern (init, shuffle, noise, ...) gets its own stream
    and adding a new label never shifts an existing one.
    """
    digest = hashlib.sha256(f"{int(master_seed)}/{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class RngStream:
    """Single-owner random stream backed by numpy's PCG64.

    ``draws_made`` counts the uniform variates consumed so far. Normal
    variates are produced by Box-Muller from pairs of uniforms, which keeps
    the output a fixed function of the uniform sequence.
    """

    def __init__(self, seed: int, label: str | None = None):
        self.seed = int(seed)
        self.label = label
        raw = self.seed if label is None else derive_seed(self.seed, label)
        self._gen = np.random.Generator(np.random.PCG64(raw))
        self.draws_made = 0

    @classmethod
    def for_concern(cls, master_seed: int, label: str) -> "RngStream":
        return cls(master_seed, label)

    def random(self, size) -> np.ndarray:
        out = self._gen.random(size)
        self.draws_made += int(np.prod(size))
        return out

    def permutation(self, n: int) -> np.ndarray:
        # argsort of uniforms keeps the permutation a function of the uniform stream
        keys = self.random(n)
        return np.argsort(keys, kind="stable")

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, label={self.label!r}, draws_made={self.draws_made})"


def rng_uniform(stream: RngStream, lo: float, hi: float, rows: int, cols: int) -> np.ndarray:
    if not lo < hi:
        raise ValueError(f"uniform range requires lo < hi, got [{lo}, {hi})")
    u = stream.random((rows, cols))
    return lo + (hi - lo) * u


def rng_normal(stream: RngStream, mu: float, sigma: float, rows: int, cols: int) -> np.ndarray:
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    n = rows * cols
    half = (n + 1) // 2
    u = stream.random((2, half))
    u1 = 1.0 - u[0]  # (0, 1], keeps log finite
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * math.pi * u[1]
    z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
    return mu + sigma * z.reshape(rows, cols)
