import pytest
from hypothesis import HealthCheck, settings

from spinbath.isotopes import load_bundled_table

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def table():
    return load_bundled_table()
