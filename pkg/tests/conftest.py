import numpy as np
import pytest

from slrs import Dataset, standardize


def make_random_dataset(n=40, s=12, p=5, q=6, seed=0, signal=False):
    """Small standardized dataset; optionally with a planted linear signal."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, s))
    Z = rng.standard_normal((n, p, q))
    if signal:
        B = np.zeros((p, q))
        B[: p // 2, : q // 2] = 0.3
        Y = X[:, 0] * 1.5 - X[:, 1] + Z.reshape(n, -1) @ B.ravel()
        Y = Y + 0.5 * rng.standard_normal(n)
    else:
        Y = rng.standard_normal(n)
    return standardize(X, Z, Y)


@pytest.fixture
def small_data():
    return make_random_dataset(seed=0)


@pytest.fixture
def signal_data():
    return make_random_dataset(n=60, s=15, p=4, q=4, seed=1, signal=True)
