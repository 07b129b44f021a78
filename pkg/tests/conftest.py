import pytest
from hypothesis import HealthCheck, settings

from chargefwd.model import Layout, SystemParams, draw_instance

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def params():
    return SystemParams()


@pytest.fixture(scope="session")
def layout():
    return Layout()


@pytest.fixture(scope="session")
def instance(params, layout):
    return draw_instance(params, layout, 0)
