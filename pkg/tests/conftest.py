import numpy as np
import pytest

from closvote import ClosParams, build_topology


@pytest.fixture
def desk():
    return build_topology(ClosParams())


@pytest.fixture
def tiny():
    return build_topology(ClosParams(n_pod=2, n0=2, n1=2, n2=2, hosts_per_tor=2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
