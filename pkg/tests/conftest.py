import numpy as np
import pytest

from calabi_lab.complexgrid import annulus, disc


@pytest.fixture(scope="session")
def unit_disc_coarse():
    return disc(1.0, 0.1)


@pytest.fixture(scope="session")
def unit_disc_fine():
    return disc(1.0, 0.05)


@pytest.fixture(scope="session")
def unit_disc_02():
    return disc(1.0, 0.02)


@pytest.fixture(scope="session")
def catenoid_annulus():
    return annulus(0.5, 1.5, 0.05)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
