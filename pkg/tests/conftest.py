import numpy as np
import pytest

from dynfactor import _kalman_core


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # compile (or load from cache) the numba kernels before any timed test
    _kalman_core.warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)
