import numpy as np
import pytest

from gsdcheck.estimation import FitCache, build_grid

# published GSD probabilities of scores 1..5 at psi = 2.1, rounded to 3 decimals
REFERENCE_PMF = {
    0.95: [0.061, 0.795, 0.130, 0.013, 0.001],
    0.88: [0.145, 0.647, 0.173, 0.032, 0.003],
    0.81: [0.230, 0.500, 0.215, 0.050, 0.005],
    0.72: [0.317, 0.370, 0.222, 0.078, 0.013],
    0.61: [0.394, 0.285, 0.184, 0.100, 0.037],
    0.38: [0.532, 0.153, 0.108, 0.096, 0.111],
}


@pytest.fixture(scope="session")
def grid():
    return build_grid()


@pytest.fixture(scope="session")
def cache(grid):
    return FitCache(grid)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
