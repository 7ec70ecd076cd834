"""Mini-batch training loop with a per-epoch test-loss curve."""

from __future__ import annotations

import logging

import numpy as np

from .data import batches
from .model import Autoencoder, mse
from .ndcore import RngStream
from .optim import Adam

logger = logging.getLogger(__name__)

EVAL_BATCH = 2048


def reconstruction_mse(model: Autoencoder, X, batch_size: int = EVAL_BATCH) -> float:
    """Full-set MSE, accumulated batch by batch (weighted by batch size)."""
    X = np.asarray(X, dtype=np.float64)
    total = 0.0
    for i in range(0, X.shape[0], batch_size):
        xb = X[i:i + batch_size]
        d = model.reconstruct(xb) - xb
        total += float(np.einsum("ij,ij->", d, d))
    return total / X.size


def fit(model: Autoencoder, X_train, *, epochs: int = 10, batch_size: int = 256, lr: float = 1e-4,
        weight_decay: float = 0.0, seed: int | None = None, X_test=None, optimizer: Adam | None = None,
        callback=None):
    """Train ``model`` in place with Adam; return the list of per-epoch test MSEs.

    Shuffling draws from the ``"shuffle"`` stream of ``seed`` (defaults to the
    model's master seed). ``callback(epoch, test_mse)`` runs after every epoch.
    """
    seed = model.config.master_seed if seed is None else seed
    opt = optimizer or Adam(model, lr=lr, weight_decay=weight_decay)
    shuffle = RngStream.for_concern(seed, "shuffle")
    curve = []
    for epoch in range(1, epochs + 1):
        running, seen = 0.0, 0
        for xb in batches(X_train, batch_size, shuffle):
            loss, ge, gd = model.loss_and_grads(xb)
            opt.step(ge, gd)
            running += loss * xb.shape[0]
            seen += xb.shape[0]
        test_mse = reconstruction_mse(model, X_test) if X_test is not None else float("nan")
        curve.append(test_mse)
        logger.info("epoch %d train_mse=%.6f test_mse=%.6f", epoch, running / max(seen, 1), test_mse)
        if callback is not None:
            callback(epoch, test_mse)
    return curve


__all__ = ["fit", "reconstruction_mse", "mse"]
