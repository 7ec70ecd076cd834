import numpy as np
import pytest

from kae.metrics import (denoising_error, knn_classify, knn_exact, pairwise_sq_dists, recall_at_n, recall_curve,
                         reconstruction_error)
from kae.model import AutoencoderConfig, build, mse
from kae.ndcore import RngStream


def brute_neighbors(P, q, k):
    d = [(sum((a - b) ** 2 for a, b in zip(P[i], P[q])), i) for i in range(len(P)) if i != q]
    return [i for _, i in sorted(d)[:k]]


def brute_recall(X, Z, k, N):
    hits = 0
    for q in range(len(X)):
        hits += len(set(brute_neighbors(X, q, k)) & set(brute_neighbors(Z, q, N)))
    return hits / (k * len(X))


def int_points(rng, n, d, lo=-4, hi=5):
    # small integers keep squared distances exact and make ties common
    return rng.integers(lo, hi, size=(n, d)).astype(float)


def test_knn_exact_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n, d = rng.integers(3, 65), rng.integers(1, 6)
        P = int_points(rng, n, d)
        q, k = rng.integers(n), rng.integers(1, n)
        got = knn_exact(P, int(q), int(k)).neighbor_indices.tolist()
        assert got == brute_neighbors(P.tolist(), q, k)


def test_knn_exact_duplicates_and_bounds():
    P = np.zeros((5, 2))
    assert knn_exact(P, 2, 3).neighbor_indices.tolist() == [0, 1, 3]
    with pytest.raises(ValueError):
        knn_exact(P, 0, 5)
    with pytest.raises(IndexError):
        knn_exact(P, 5, 1)


def test_recall_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(12, 65))
        X, Z = int_points(rng, n, 4), int_points(rng, n, 2)
        k = int(rng.integers(1, 5))
        N = int(rng.integers(k, n))
        assert recall_at_n(X, Z, k, N) == pytest.approx(brute_recall(X.tolist(), Z.tolist(), k, N), abs=1e-12)


def test_recall_invariants():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(60, 5))
    Z = rng.normal(size=(60, 2))
    curve = recall_curve(X, Z, 5, [5, 10, 20, 40, 59])
    vals = [curve[n] for n in sorted(curve)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert curve[59] == 1.0
    assert recall_at_n(X, X, 5, 5) == 1.0
    Q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    assert recall_at_n(X, X @ Q + 3.0, 5, 5) == 1.0
    with pytest.raises(ValueError):
        recall_at_n(X, Z, 10, 5)
    with pytest.raises(ValueError):
        recall_at_n(X, Z, 5, 60)


def test_pairwise_expansion_matches_direct():
    rng = np.random.default_rng(3)
    A, B = rng.normal(size=(7, 4)), rng.normal(size=(9, 4))
    direct = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
    np.testing.assert_allclose(pairwise_sq_dists(A, B), direct, atol=1e-12)
    assert np.all(pairwise_sq_dists(A, A) >= 0)


def test_knn_classify_matches_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n_tr, n_te = int(rng.integers(1, 65)), int(rng.integers(1, 30))
        tr, te = int_points(rng, n_tr, 3), int_points(rng, n_te, 3)
        ytr, yte = rng.integers(0, 4, n_tr), rng.integers(0, 4, n_te)
        expect = []
        for row in te:
            d = ((tr - row) ** 2).sum(1)
            expect.append(ytr[min(range(n_tr), key=lambda i: (d[i], i))])
        pred = knn_classify(tr, ytr, te, chunk=7)
        assert pred.tolist() == expect
        assert knn_classify(tr, ytr, te, yte) == pytest.approx(np.mean(np.array(expect) == yte))


def test_knn_classify_tie_goes_to_lowest_index():
    tr = np.array([[1.0], [-1.0], [1.0]])
    assert knn_classify(tr, np.array([7, 8, 9]), np.zeros((1, 1))).tolist() == [7]
    with pytest.raises(ValueError):
        knn_classify(np.zeros((0, 1)), np.array([]), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        knn_classify(tr, np.array([7, 8, 9]), np.zeros((1, 2)))


def two_pass_mse(A, B):
    total = 0.0
    for a, b in zip(A.ravel(), B.ravel()):
        total += (a - b) ** 2
    return total / A.size


@pytest.fixture(scope="module")
def tiny_model():
    return build(AutoencoderConfig(d_input=12, d_latent=3, family="kae", order_p=2, master_seed=5))


def test_mse_and_reconstruction_against_oracle(tiny_model):
    rng = np.random.default_rng(5)
    A, B = rng.random((30, 12)), rng.random((30, 12))
    assert abs(mse(A, B) - two_pass_mse(A, B)) < 1e-12
    X = rng.random((5000, 12))  # spans more than one evaluation batch
    oracle = two_pass_mse(tiny_model.reconstruct(X), X)
    assert abs(reconstruction_error(tiny_model, X) - oracle) < 1e-12
    with pytest.raises(ValueError):
        reconstruction_error(tiny_model, np.zeros((0, 12)))


def test_denoising_limits(tiny_model):
    X = np.random.default_rng(6).random((200, 12))
    clean = reconstruction_error(tiny_model, X)
    for kind in ("gaussian", "saltpepper"):
        assert denoising_error(tiny_model, X, kind, RngStream(1), strength=0.0) == pytest.approx(clean, abs=1e-15)
    near = denoising_error(tiny_model, X, "gaussian", RngStream(1), strength=1e-6)
    assert abs(near - clean) < 1e-6
    noisy = denoising_error(tiny_model, X, "saltpepper", RngStream(1))
    assert noisy != clean
    with pytest.raises(ValueError):
        denoising_error(tiny_model, X, "speckle", RngStream(1))
