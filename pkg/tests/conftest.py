import os

# pick a threading layer that exists in this environment before numba loads
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import pytest

from volterra_sens import SeedSpec, TimeGrid


@pytest.fixture(scope="session")
def seed():
    return SeedSpec(20240809)


@pytest.fixture(scope="session")
def grid128():
    return TimeGrid(0.0, 1.0, 128)


@pytest.fixture(scope="session")
def grid64():
    return TimeGrid(0.0, 1.0, 64)
