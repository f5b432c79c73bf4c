import warnings

import numpy as np
import pytest

from glvlab.geometry import build_polygon, regular_polygon, triangulate
from glvlab.vortex_profile import default_table


@pytest.fixture(scope="session")
def square_domain():
    return build_polygon([(0, 0), (1, 0), (1, 1), (0, 1)])


@pytest.fixture(scope="session")
def square_mesh(square_domain):
    return triangulate(square_domain, 0.1)


@pytest.fixture(scope="session")
def coarse_square_mesh(square_domain):
    return triangulate(square_domain, 0.25)


@pytest.fixture(scope="session")
def disc_domain():
    return build_polygon(regular_polygon(64))


@pytest.fixture(scope="session")
def disc_mesh(disc_domain):
    return triangulate(disc_domain, 0.1)


@pytest.fixture(scope="session")
def profile_table():
    return default_table()


@pytest.fixture()
def quiet_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
