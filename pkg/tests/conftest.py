import numpy as np
import pytest

from g2flow.algebra import build_standard_tables
from g2flow.grid import Grid


@pytest.fixture(scope="session")
def tables():
    return build_standard_tables()


@pytest.fixture
def grid16():
    return Grid(length=1.0, n=16, active_dims=(0, 1))


@pytest.fixture
def grid32():
    return Grid(length=1.0, n=32, active_dims=(0, 1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
