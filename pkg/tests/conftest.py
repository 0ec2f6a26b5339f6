import numpy as np
import pytest

from hbmc.geometry import HyperbolicPoint
from hbmc.tables import get_default_table


@pytest.fixture(scope="session")
def origin():
    return HyperbolicPoint(0.0, 1.0)


@pytest.fixture(scope="session")
def table():
    """Warm the shared spline table once per session."""
    return get_default_table()


def combined_z(mean_a, se_a, mean_b, se_b):
    return (mean_a - mean_b) / np.hypot(se_a, se_b)
