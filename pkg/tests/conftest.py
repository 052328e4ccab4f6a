import numpy as np
import pytest

from seqmem.patterns import PatternDistribution, generate_patterns


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def make_patterns(n, p, seed=0):
    return generate_patterns(PatternDistribution(seed=seed), n, p)


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: long-running protocol tests (acceptance suite)")
