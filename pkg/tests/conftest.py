import numpy as np
import pytest


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the DTW kernels once so individual tests time only their work."""
    from loopscope.dtw import DtwConfig, dtw_cost_matrix, dtw_distance

    x = np.array([0.0, 1.0, 2.0])
    dtw_distance(x, x, DtwConfig())
    dtw_cost_matrix(x.reshape(1, -1), x.reshape(1, -1), DtwConfig())
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
