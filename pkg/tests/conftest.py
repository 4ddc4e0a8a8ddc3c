import numpy as np
import pytest

from vwslab.grid import Field, make_grid
from vwslab.mollify import Mollifier, ScaleFn

LADDER = (2.0**-3, 2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7)


@pytest.fixture(scope="session")
def grid_1d():
    return make_grid(1, 64, 8.0)


@pytest.fixture(scope="session")
def grid_1d_pi():
    return make_grid(1, 16, np.pi)


@pytest.fixture(scope="session")
def grid_2d():
    return make_grid(2, 32, 8.0)


@pytest.fixture(scope="session")
def gaussian():
    return Mollifier("gaussian")


@pytest.fixture(scope="session")
def loglog():
    return ScaleFn("loglog")


def random_field(spec, seed=0):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape)
    return Field(spec, vals)
