import numpy as np
import pytest

from ppdelab.measures import ControlProcess, simulate_paths
from ppdelab.pathspace import DiscretePath, TimeGrid


@pytest.fixture(scope="session")
def grid16():
    return TimeGrid.uniform(1.0, 16)


@pytest.fixture(scope="session")
def grid64():
    return TimeGrid.uniform(1.0, 64)


@pytest.fixture(scope="session")
def brownian_batch(grid64):
    c = ControlProcess.constant(grid64, 0.0, 1.0, bound=1.0)
    return simulate_paths(c, 64, seed=2718)


@pytest.fixture()
def rng():
    return np.random.Generator(np.random.Philox(key=np.array([99, 1], dtype=np.uint64)))


def make_path(times, values):
    return DiscretePath.from_knots(np.asarray(times, float), np.asarray(values, float))
