import numpy as np
import pytest

from hartree4 import ground_state as gs
from hartree4.radial_core import make_grid


@pytest.fixture(scope="session")
def bundle_small():
    """Fast bundle for unit tests; tail limits residual to ~1e-6."""
    return gs.build_bundle(make_grid(16.0, 768), tol=1e-6)


@pytest.fixture(scope="session")
def bundle_mid():
    return gs.build_bundle(make_grid(18.0, 1024), tol=1e-7)


@pytest.fixture(scope="session")
def bundle_default():
    """The default-grid bundle the acceptance criteria run on."""
    return gs.build_bundle(tol=1e-8)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(7)
