import numpy as np
import pytest

from corrdp.dataset import Dataset


def toy_dataset(values, label=None, names=None):
    """Build a Dataset from a plain matrix with no missing cells."""
    values = np.asarray(values, dtype=float)
    l, n = values.shape
    if label is None:
        label = [(-1.0) ** i for i in range(l)]
    if names is None:
        names = tuple(f"f{j}" for j in range(n))
    return Dataset(
        values=values,
        feature_names=tuple(names),
        label=np.asarray(label, dtype=float),
        missing_mask=np.zeros_like(values, dtype=bool),
    )


@pytest.fixture
def traffic_dataset():
    """Four users' location codes at four time points; users 1 and 2 move together."""
    values = np.array(
        [[2, 2, 3, 4], [2, 2, 3, 4], [1, 4, 5, 2], [4, 5, 2, 5]], dtype=float
    )
    return toy_dataset(values, label=[1, 1, -1, -1], names=("t1", "t2", "t3", "t4"))


def random_dataset(rng, l, n, ensure_labels=True):
    values = rng.uniform(-1, 1, size=(l, n))
    label = np.where(rng.random(l) < 0.5, -1.0, 1.0)
    if ensure_labels:
        label[0], label[1] = -1.0, 1.0
    return toy_dataset(values, label=label)
