import numpy as np
import pytest

from app.logic.lattice import ConvexPolygon, build_lattice


@pytest.fixture(scope="session")
def square():
    return ConvexPolygon.square(1.0)


@pytest.fixture(scope="session")
def cx8(square):
    return build_lattice(square, 1 / 8)


@pytest.fixture(scope="session")
def cx16(square):
    return build_lattice(square, 1 / 16)


@pytest.fixture(scope="session")
def cx32(square):
    return build_lattice(square, 1 / 32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
