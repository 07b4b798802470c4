import numpy as np
import pytest

from ltnet import config
from ltnet.model import EIPairParams, Network, SingleInhibitoryNetwork


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run long reproduction tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def oscillating_pair() -> EIPairParams:
    """a=4, b=c=3, d=0, m=(1,2), u=(1.5,0): satisfies every isolated-pair condition."""
    return EIPairParams(a=4.0, b=3.0, c=3.0, d=0.0, m1=1.0, m2=2.0, u1=1.5, u2=0.0)


@pytest.fixture
def two_excitatory_one_inhibitory() -> SingleInhibitoryNetwork:
    """Two excitatory nodes sharing one inhibitory node, u_3 = -5; (u1, u2) is filled in per test."""
    return SingleInhibitoryNetwork(
        A=[[8.5, 1.0], [1.0, 5.0]],
        b=[5.0, 7.0],
        c=[4.0, 5.0],
        d=1.0,
        u_e=[0.0, 0.0],
        u_inh=-5.0,
        m_e=[2.0, 3.0],
        m_inh=6.0,
    )


@pytest.fixture
def inhibitory_ring():
    """3-node inhibitory ring: d_12 = d_23 = d_31 = 4, d_21 = d_32 = d_13 = 0.5, no self-inhibition."""
    D = np.array([
        [0.0, 4.0, 0.5],
        [0.5, 0.0, 4.0],
        [4.0, 0.5, 0.0],
    ])
    return -D


@pytest.fixture
def ring_network(inhibitory_ring) -> Network:
    return Network(W=inhibitory_ring, u=[5.0, 5.0, 5.0], m=[10.0, 10.0, 10.0], tau=1.0)


@pytest.fixture
def restore_config():
    saved = {name: getattr(config, name) for name in ("REL_TOL", "WORKERS", "SEED", "DB_PATH", "API_KEYS")}
    yield
    for name, value in saved.items():
        setattr(config, name, value)
