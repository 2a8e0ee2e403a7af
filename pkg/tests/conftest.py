import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ckforms import metrics
from ckforms.fixtures import product_fixtures, schwarzschild_fixtures

settings.register_profile(
    "ckforms",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("ckforms")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def schw():
    """Candidate solutions on the Schwarzschild chart, keyed by name."""
    return schwarzschild_fixtures()


@pytest.fixture(scope="session")
def schw5():
    """Candidate solutions on Schwarzschild x R."""
    return product_fixtures()


@pytest.fixture(scope="session")
def schw_points():
    m = metrics.schwarzschild()
    return metrics.sample_points(m, 3, np.random.default_rng(7))


@pytest.fixture(scope="session")
def random5():
    m = metrics.random_perturbed(5, 3)
    return m, np.array([0.1, -0.2, 0.3, 0.05, 0.2])
