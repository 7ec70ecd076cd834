"""Downstream metrics on learned latent codes.

All neighbour searches are exact and use squared Euclidean distance, with
ties broken by ascending row index. Retrieval excludes the query itself from
its candidate pool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Autoencoder
from .ndcore import RngStream, as_matrix
from .train import reconstruction_mse

__all__ = [
    "NeighborList",
    "TASKS",
    "NOISE_KINDS",
    "pairwise_sq_dists",
    "knn_exact",
    "recall_at_n",
    "recall_curve",
    "knn_classify",
    "reconstruction_error",
    "denoising_error",
]

TASKS = ("reconstruction", "retrieval", "classification", "denoising-gaussian", "denoising-saltpepper")
NOISE_KINDS = {"gaussian": 0.1, "saltpepper": 0.05}
LOWER_IS_BETTER = {"reconstruction": True, "retrieval": False, "classification": False,
                   "denoising-gaussian": True, "denoising-saltpepper": True}


@dataclass(frozen=True)
class NeighborList:
    query_index: int
    neighbor_indices: np.ndarray


def pairwise_sq_dists(A, B) -> np.ndarray:
    """``|a|^2 + |b|^2 - 2 a.b``; identical rows give bit-identical distances."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    d = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(d, 0.0, out=d)
    return d


def _ranked(dist_row: np.ndarray, exclude: int | None, k: int) -> np.ndarray:
    if exclude is not None:
        dist_row = dist_row.copy()
        dist_row[exclude] = np.inf
    return np.argsort(dist_row, kind="stable")[:k]


def knn_exact(points, query_row: int, k: int) -> NeighborList:
    points = as_matrix(points, "points")
    n = points.shape[0]
    if not 0 <= query_row < n:
        raise IndexError(f"query row {query_row} outside 0..{n - 1}")
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the {n} points")
    diff = points - points[query_row]
    dist = np.einsum("ij,ij->i", diff, diff)
    return NeighborList(query_row, _ranked(dist, query_row, k))


def _topn_all(points, n_keep: int) -> np.ndarray:
    """Row ``q`` holds the ``n_keep`` nearest other rows to ``q``."""
    D = pairwise_sq_dists(points, points)
    np.fill_diagonal(D, np.inf)
    return np.argsort(D, axis=1, kind="stable")[:, :n_keep]


def recall_curve(input_space, latent_space, k: int, ns) -> dict:
    """``{N: recall k@N}`` for each ``N`` in ``ns``, sharing one neighbour sort."""
    input_space = as_matrix(input_space, "input_space")
    latent_space = as_matrix(latent_space, "latent_space")
    n = input_space.shape[0]
    if latent_space.shape[0] != n:
        raise ValueError("input and latent spaces must have the same rows")
    ns = sorted(int(v) for v in ns)
    if ns[0] < k:
        raise ValueError(f"N={ns[0]} must be at least k={k}")
    if ns[-1] >= n:
        raise ValueError(f"N={ns[-1]} must be smaller than the {n} points")
    truth = _topn_all(input_space, k)
    retrieved = _topn_all(latent_space, ns[-1])
    out = {}
    for N in ns:
        top = retrieved[:, :N]
        hits = (top[:, :, None] == truth[:, None, :]).any(axis=1).sum(axis=1)
        out[N] = float(hits.sum() / (k * n))
    return out


def recall_at_n(input_space, latent_space, k: int, N: int) -> float:
    return recall_curve(input_space, latent_space, k, [N])[N]


def knn_classify(train_latents, train_labels, test_latents, test_labels=None, chunk: int = 1000):
    """1-NN accuracy of ``test_latents`` against a labelled training database.

    Without ``test_labels`` the predicted labels are returned instead.
    """
    train_latents = as_matrix(train_latents, "train_latents")
    test_latents = as_matrix(test_latents, "test_latents")
    train_labels = np.asarray(train_labels)
    if train_latents.shape[0] == 0:
        raise ValueError("empty training set")
    if train_latents.shape[1] != test_latents.shape[1]:
        raise ValueError(f"latent widths differ: {train_latents.shape[1]} vs {test_latents.shape[1]}")
    pred = np.empty(test_latents.shape[0], dtype=train_labels.dtype)
    for i in range(0, test_latents.shape[0], chunk):
        D = pairwise_sq_dists(test_latents[i:i + chunk], train_latents)
        pred[i:i + chunk] = train_labels[np.argmin(D, axis=1)]  # argmin returns the first (lowest index) tie
    if test_labels is None:
        return pred
    return float(np.mean(pred == np.asarray(test_labels)))


def reconstruction_error(model: Autoencoder, test) -> float:
    X = getattr(test, "X", test)
    if X.shape[0] == 0:
        raise ValueError("empty test set")
    return reconstruction_mse(model, X)


def make_noisy(X, kind: str, strength: float | None, stream: RngStream, clip: bool = False):
    from .data import add_gaussian_noise, add_salt_pepper

    if kind not in NOISE_KINDS:
        raise ValueError(f"unknown noise kind {kind!r}; expected one of {sorted(NOISE_KINDS)}")
    strength = NOISE_KINDS[kind] if strength is None else strength
    if kind == "gaussian":
        return add_gaussian_noise(X, strength, stream, clip=clip)
    return add_salt_pepper(X, strength, stream)


def denoising_error(model: Autoencoder, clean, kind: str, stream: RngStream, strength: float | None = None,
                    clip: bool = False) -> float:
    """MSE between clean inputs and the reconstruction of their noised copies."""
    X = getattr(clean, "X", clean)
    noisy = make_noisy(X, kind, strength, stream, clip=clip)
    total = 0.0
    for i in range(0, X.shape[0], 2048):
        d = model.reconstruct(noisy[i:i + 2048]) - X[i:i + 2048]
        total += float(np.einsum("ij,ij->", d, d))
    return total / X.size
