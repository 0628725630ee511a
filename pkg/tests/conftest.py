import numpy as np
import pytest

from parlab.grid import GridFunction, make_domain, make_grid


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def interval_grid():
    dom = make_domain("interval", length=1.0, cells=64)
    return make_grid(dom, t0=0.0, T=1.0, nt=33)


@pytest.fixture
def box_grid():
    dom = make_domain("box", lengths=(1.0, 1.0), cells=(24, 24))
    return make_grid(dom, t0=0.0, T=1.0, nt=17)


def random_field(grid, rng, smooth=False):
    vals = rng.standard_normal(grid.shape)
    if smooth:
        from scipy import ndimage

        vals = ndimage.gaussian_filter(vals, sigma=1.5)
    return GridFunction(grid, vals)
