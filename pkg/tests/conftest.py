"""Shared fixtures: a 784-feature MNIST-family stand-in and IDX file roots.

Real MNIST IDX files are used when CIMTRAIN_DATA points at them;
otherwise the suite upscales scikit-learn's bundled 8x8 digits to 28x28
and writes them through the package's own IDX pipeline, so every
file-backed code path still runs.
"""

import os

import numpy as np
import pytest
from sklearn.datasets import load_digits

from cimtrain.config import DATA_ROOT_ENV, MNIST_FILES
from cimtrain.dataio import Dataset, load_idx, write_idx


def _upscale_28(images8: np.ndarray) -> np.ndarray:
    """Nearest-neighbor 8x8 -> 28x28 (samples x 64 -> samples x 784)."""
    idx = np.floor(np.arange(28) * 8 / 28).astype(int)
    imgs = images8.reshape(-1, 8, 8)
    big = imgs[:, idx][:, :, idx]
    return big.reshape(-1, 784)


def _build_digits784() -> tuple[Dataset, Dataset]:
    raw = load_digits()
    x = _upscale_28(raw.data / 16.0)
    y = raw.target.astype(np.int64)
    test_mask = np.arange(len(y)) % 5 == 4  # deterministic 80/20 split
    train = Dataset(x[~test_mask].T, y[~test_mask], "train")
    test = Dataset(x[test_mask].T, y[test_mask], "test")
    return train, test


@pytest.fixture(scope="session")
def mnist_family(tmp_path_factory):
    """(train, test, idx_root): real MNIST when available, digits-784 otherwise."""
    root = os.environ.get(DATA_ROOT_ENV)
    if root and all(os.path.exists(os.path.join(root, f)) for f in MNIST_FILES.values()):
        train = load_idx(os.path.join(root, MNIST_FILES["train_images"]),
                         os.path.join(root, MNIST_FILES["train_labels"]), "train")
        test = load_idx(os.path.join(root, MNIST_FILES["test_images"]),
                        os.path.join(root, MNIST_FILES["test_labels"]), "test")
        return train, test, root

    train, test = _build_digits784()
    root = tmp_path_factory.mktemp("idx_root")
    write_idx(train, root / MNIST_FILES["train_images"], root / MNIST_FILES["train_labels"])
    write_idx(test, root / MNIST_FILES["test_images"], root / MNIST_FILES["test_labels"])
    train = load_idx(root / MNIST_FILES["train_images"],
                     root / MNIST_FILES["train_labels"], "train")
    test = load_idx(root / MNIST_FILES["test_images"],
                    root / MNIST_FILES["test_labels"], "test")
    return train, test, str(root)


@pytest.fixture()
def data_env(mnist_family, monkeypatch):
    """Point CIMTRAIN_DATA at the session dataset root and return it."""
    _, _, root = mnist_family
    monkeypatch.setenv(DATA_ROOT_ENV, root)
    return root
