import gzip
import struct

import numpy as np
import pytest

from kae.layers import backward, forward


def numeric_grad(f, arr, h=1e-6):
    """Central-difference gradient of scalar ``f()`` w.r.t. every entry of ``arr`` (in place)."""
    g = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return g


def layer_fd_check(params, X, dY, rtol=1e-4, atol=1e-7):
    """Compare analytic layer gradients with central differences of sum(Y * dY)."""
    Y, cache = forward(params, X)
    dX, grads = backward(params, cache, dY)

    def objective():
        return float((forward(params, X)[0] * dY).sum())

    np.testing.assert_allclose(dX, numeric_grad(objective, X), rtol=rtol, atol=atol)
    for name, arr in params.tensors.items():
        np.testing.assert_allclose(grads[name], numeric_grad(objective, arr), rtol=rtol, atol=atol,
                                   err_msg=f"{params.spec.kind}.{name}")


def write_idx(path, images: np.ndarray, labels: np.ndarray):
    n, rows, cols = images.shape
    img = struct.pack(">IIII", 0x803, n, rows, cols) + images.astype(np.uint8).tobytes()
    lab = struct.pack(">II", 0x801, n) + labels.astype(np.uint8).tobytes()
    return img, lab


@pytest.fixture(scope="session")
def tiny_data_dir(tmp_path_factory):
    """MNIST-layout data dir with 240 train / 80 test synthetic 28x28 images."""
    root = tmp_path_factory.mktemp("data")
    d = root / "mnist"
    d.mkdir()
    rng = np.random.default_rng(0)
    protos = rng.random((10, 28, 28)) ** 4
    for tag, n in (("train", 240), ("t10k", 80)):
        labels = np.arange(n) % 10
        imgs = np.clip(protos[labels] + 0.15 * rng.standard_normal((n, 28, 28)), 0, 1)
        img, lab = write_idx(None, np.round(imgs * 255), labels)
        (d / f"{tag}-images-idx3-ubyte").write_bytes(img)
        with gzip.open(d / f"{tag}-labels-idx1-ubyte.gz", "wb") as fh:
            fh.write(lab)
    return root


def mnist_dir():
    """``$KAE_DATA_DIR`` or ``<repo>/data``, if it holds the MNIST IDX files."""
    import os
    from pathlib import Path

    root = Path(os.environ.get("KAE_DATA_DIR") or Path(__file__).resolve().parents[1] / "data")
    mn = root / "mnist"
    if any((mn / f"train-images-idx3-ubyte{s}").exists() for s in ("", ".gz")):
        return root
    return None


requires_mnist = pytest.mark.skipif(mnist_dir() is None, reason="MNIST IDX files not found (set KAE_DATA_DIR)")


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
