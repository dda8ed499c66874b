import numpy as np
import pytest

from liouville4.rng import SeededStream


@pytest.fixture
def stream():
    return SeededStream(20240917)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def within_se(estimate, reference, stderr, k=3.0):
    return abs(estimate - reference) <= k * stderr
