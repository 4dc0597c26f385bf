import json
from pathlib import Path

import numpy as np
import pytest

from seglab.grid import Grid2D
from seglab.solver import make_prototype

ORACLES = json.loads((Path(__file__).parent / "oracles" / "oracles.json").read_text())


@pytest.fixture(scope="session")
def oracles():
    return ORACLES


@pytest.fixture(scope="session")
def grid257():
    return Grid2D.square(-1.0, 1.0, 257)


@pytest.fixture(scope="session")
def grid256():
    return Grid2D.square(-1.0, 1.0, 256)


@pytest.fixture(scope="session")
def proto2(grid256):
    return make_prototype(2, grid256)


@pytest.fixture(scope="session")
def proto3(grid256):
    return make_prototype(3, grid256)


@pytest.fixture(scope="session")
def proto4(grid256):
    return make_prototype(4, grid256)


def unit_square(n):
    return Grid2D.square(0.0, 1.0, n)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end checks")
    np.seterr(all="ignore")
