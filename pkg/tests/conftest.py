import numpy as np
import pytest

from dampednls import build_noise, gaussian, make_grid


@pytest.fixture
def grid2():
    return make_grid(2, 32, 10.0)


@pytest.fixture
def noise2(grid2):
    return build_noise(grid2, [((0, 0), 0.2), ((1, 0), 0.15), ((0, -1), 0.1)])


@pytest.fixture
def bump2(grid2):
    return gaussian(grid2, 1.2, 0.7, center=(0.3, -0.2))


def random_field(grid, rng, count=None):
    shape = grid.shape if count is None else (count,) + grid.shape
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
