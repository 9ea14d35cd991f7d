import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def mixture(seed, n=5000):
    """Uniform body on [0, 30] with a 5% tail of 32 + Exp(11)."""
    g = np.random.default_rng(seed)
    tail = g.random(n) < 0.05
    body = g.uniform(0, 30, n)
    return np.where(tail, 32 + g.exponential(11, n), body)
