import numpy as np
import pytest

from bevsim.bevgrid import GridSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def paper_spec():
    """The reference grid: [-5, 5]^2, 0.02 m cells -> 500 x 500."""
    return GridSpec(x_range=(-5, 5), y_range=(-5, 5), z_range=(-3, 3), cell_size=0.02)


@pytest.fixture
def small_spec():
    """A 50 x 50 grid cheap enough for brute-force scans."""
    return GridSpec(x_range=(-2.5, 2.5), y_range=(-2.5, 2.5), z_range=(-3, 3), cell_size=0.1)
