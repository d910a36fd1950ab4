import functools

import pytest
from hypothesis import HealthCheck, settings

from satint.pipeline import certify_plant
from satint.plant import BUILTIN_PLANTS, get_plant

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

PLANT_NAMES = sorted(BUILTIN_PLANTS)


@functools.lru_cache(maxsize=None)
def certified(name: str):
    """Certified built-in plant, computed once per session."""
    return certify_plant(get_plant(name))


@pytest.fixture(scope="session")
def lin():
    return certified("linear1d")


@pytest.fixture(scope="session")
def osc():
    return certified("osc_cubic")


@pytest.fixture(scope="session")
def cubic():
    return certified("scalar_cubic")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
