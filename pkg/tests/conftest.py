import numpy as np
import pytest

from koow.data import Dataset
from koow.simulation import generate, scenario


@pytest.fixture
def rng():
    return np.random.default_rng(20190101)


@pytest.fixture(scope="session")
def linear_500():
    ds, _ = generate(scenario("linear", n=500), 7)
    return ds


def random_psd(rng, n, rank=None):
    rank = rank or n
    B = rng.normal(size=(n, rank))
    return B @ B.T


def small_dataset(rng, n=40, p=3, with_y=True):
    X = rng.normal(size=(n, p))
    A = X.sum(axis=1) + rng.normal(size=n)
    Y = A + X[:, 0] + rng.normal(size=n) if with_y else None
    return Dataset(X=X, A=A, Y=Y)
