import pytest
from hypothesis import HealthCheck, settings

from pgspline.weights import parse_weight

settings.register_profile("default", deadline=None, max_examples=25, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def const1():
    return parse_weight("const:1")


@pytest.fixture(scope="session")
def exp1():
    return parse_weight("exp:1")


@pytest.fixture(scope="session")
def gauss_pair():
    return parse_weight("gauss-paper-f"), parse_weight("gauss-paper-g")
