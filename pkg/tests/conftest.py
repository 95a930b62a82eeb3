import numpy as np
import pytest

from thinfilm import constants


@pytest.fixture(scope="session")
def kc1():
    return constants(1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def random_state(rng, n, alpha=1.0, span=5.0):
    """Sorted positions with unit-budget random weights."""
    x = np.unique(np.sort(rng.uniform(-span * alpha, span * alpha, n)))
    w = rng.uniform(0.0, 1.0, x.size)
    w /= w.sum() * (1.0 + 1e-12)
    return x, w
