import numpy as np
import pytest

from kae.data import (DataFormatError, Dataset, add_gaussian_noise, add_salt_pepper, batches, load_cifar,
                      load_dataset, load_idx, subsample)
from kae.ndcore import RngStream

from conftest import mnist_dir, requires_mnist, write_idx

PIXELS = np.array([[[0, 255], [128, 1]], [[10, 20], [30, 40]]], dtype=np.uint8)


@pytest.fixture
def idx_pair(tmp_path):
    img, lab = write_idx(None, PIXELS, np.array([3, 7]))
    (tmp_path / "img").write_bytes(img)
    (tmp_path / "lab").write_bytes(lab)
    return tmp_path


def test_idx_fixture_decodes_exactly(idx_pair):
    ds = load_idx(idx_pair / "img", idx_pair / "lab")
    assert ds.X.shape == (2, 4)
    np.testing.assert_array_equal(ds.X[0], [0.0, 1.0, 128 / 255, 1 / 255])
    np.testing.assert_array_equal(ds.X[1], np.array([10, 20, 30, 40]) / 255)
    assert ds.labels.tolist() == [3, 7]


def test_idx_errors(idx_pair):
    raw = (idx_pair / "img").read_bytes()
    (idx_pair / "bad").write_bytes(b"\x00\x00\x08\x04" + raw[4:])
    with pytest.raises(DataFormatError, match="magic"):
        load_idx(idx_pair / "bad", idx_pair / "lab")
    (idx_pair / "short").write_bytes(raw[:-1])
    with pytest.raises(DataFormatError, match="payload"):
        load_idx(idx_pair / "short", idx_pair / "lab")
    _, lab3 = write_idx(None, np.zeros((3, 2, 2)), np.array([1, 2, 3]))
    (idx_pair / "lab3").write_bytes(lab3)
    with pytest.raises(DataFormatError, match="count mismatch"):
        load_idx(idx_pair / "img", idx_pair / "lab3")
    with pytest.raises(FileNotFoundError):
        load_idx(idx_pair / "nope", idx_pair / "lab")


def test_cifar_fixture(tmp_path):
    d10 = tmp_path / "cifar-10-batches-bin"
    d10.mkdir()
    rec = np.concatenate([[4], np.arange(3072) % 256]).astype(np.uint8)
    for i in range(1, 6):
        (d10 / f"data_batch_{i}.bin").write_bytes(rec.tobytes())
    (d10 / "test_batch.bin").write_bytes(rec.tobytes())
    ds = load_cifar(tmp_path, "cifar10")
    assert ds.X.shape == (5, 3072) and ds.labels.tolist() == [4] * 5 and ds.n_classes == 10
    np.testing.assert_array_equal(ds.X[0, :3], [0, 1 / 255, 2 / 255])
    assert ds.X[0, 1024] == (1024 % 256) / 255  # G plane starts at 1024
    d100 = tmp_path / "cifar-100-binary"
    d100.mkdir()
    rec100 = np.concatenate([[2, 57], np.full(3072, 255)]).astype(np.uint8)
    (d100 / "test.bin").write_bytes(rec100.tobytes() * 2)
    ds = load_cifar(tmp_path, "cifar100", split="test")
    assert ds.labels.tolist() == [57, 57] and ds.n_classes == 100 and np.all(ds.X == 1.0)
    (d100 / "train.bin").write_bytes(rec100.tobytes()[:-1])
    with pytest.raises(DataFormatError, match="stride"):
        load_cifar(tmp_path, "cifar100")
    (d10 / "data_batch_3.bin").unlink()
    with pytest.raises(FileNotFoundError, match="data_batch_3"):
        load_cifar(tmp_path, "cifar10")


def toy(n=10, d=3):
    X = np.arange(n * d, dtype=float).reshape(n, d) / (n * d)
    return Dataset(X, np.arange(n) % 2, name="toy")


def test_batches_partition_rows():
    ds = toy()
    bs = batches(ds, 4, RngStream(1))
    assert [b.shape[0] for b in bs] == [4, 4, 2]
    rows = sorted(map(tuple, np.vstack(bs)))
    assert rows == sorted(map(tuple, ds.X))
    again = batches(ds, 4, RngStream(1))
    assert all(np.array_equal(a, b) for a, b in zip(bs, again))
    with pytest.raises(ValueError):
        batches(ds, 0, RngStream(1))


def test_gaussian_noise():
    X = np.full((1000, 100), 0.5)
    assert np.array_equal(add_gaussian_noise(X, 0.0, RngStream(1)), X)
    noisy = add_gaussian_noise(X, 0.1, RngStream(2))
    half_normal_mean = 0.1 * np.sqrt(2 / np.pi)
    assert abs(np.abs(noisy - X).mean() - half_normal_mean) < 0.02 * half_normal_mean
    assert np.array_equal(noisy, add_gaussian_noise(X, 0.1, RngStream(2)))
    assert noisy.max() > 0.8  # no clipping by default
    assert add_gaussian_noise(X, 1.0, RngStream(2), clip=True).max() <= 1.0


def test_salt_and_pepper():
    X = np.full((1000, 100), 0.5)
    assert np.array_equal(add_salt_pepper(X, 0.0, RngStream(1)), X)
    assert set(np.unique(add_salt_pepper(X, 1.0, RngStream(1)))) <= {0.0, 1.0}
    noisy = add_salt_pepper(X, 0.05, RngStream(3))
    hit = noisy != 0.5
    assert abs(hit.mean() - 0.05) < 0.005
    assert abs((noisy[hit] == 1.0).mean() - 0.5) < 0.03
    with pytest.raises(ValueError):
        add_salt_pepper(X, 1.5, RngStream(1))


def test_subsample():
    ds = Dataset(np.arange(10000.0)[:, None], np.arange(10000) % 10)
    sub = subsample(ds, 1000, RngStream(4))
    assert len(np.unique(sub.X[:, 0])) == 1000
    np.testing.assert_array_equal(sub.labels, sub.X[:, 0].astype(int) % 10)
    assert np.array_equal(sub.X, subsample(ds, 1000, RngStream(4)).X)
    full = subsample(ds, len(ds), RngStream(5))
    assert sorted(full.X[:, 0]) == list(ds.X[:, 0])
    with pytest.raises(ValueError):
        subsample(ds, 10001, RngStream(4))


def test_missing_data_dir(tmp_path, monkeypatch):
    monkeypatch.delenv("KAE_DATA_DIR", raising=False)
    with pytest.raises(FileNotFoundError):
        load_dataset("mnist", "train")
    with pytest.raises(FileNotFoundError, match="train-images"):
        load_dataset("mnist", "train", tmp_path)


@requires_mnist
def test_mnist_matches_published_counts():
    train = load_dataset("mnist", "train", mnist_dir())
    test = load_dataset("mnist", "test", mnist_dir())
    assert train.X.shape == (60_000, 784) and len(test) == 10_000
    for ds in (train, test):
        assert ds.X.min() >= 0.0 and ds.X.max() <= 1.0
        assert np.all(np.bincount(ds.labels, minlength=10) > 0) and ds.labels.max() == 9
