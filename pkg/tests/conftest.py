import numpy as np
import pytest

from superarrival.dynamics import BarrierParams, PhysicalParams
from superarrival.scenarios import preset
from superarrival.wavepacket import DetectorParams


@pytest.fixture(scope="session")
def fig2():
    return preset("fig2")


@pytest.fixture(scope="session")
def fig1():
    return preset("fig1")


@pytest.fixture(scope="session")
def p2():
    return PhysicalParams(m=1.0, q0=-1000.0, p0=2.0, alpha0_sq=5.0)


@pytest.fixture(scope="session")
def b500():
    return BarrierParams(k=1 / 500, g=1 / 500, t_b=500.0)


@pytest.fixture(scope="session")
def det500():
    return DetectorParams(500.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
