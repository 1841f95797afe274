import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "heatbv", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("heatbv")


@pytest.fixture(scope="session")
def circle():
    from heatbv import circle as mk
    return mk()


@pytest.fixture(scope="session")
def torus():
    from heatbv import flat_torus
    return flat_torus()


@pytest.fixture(scope="session")
def sphere():
    from heatbv import sphere2
    return sphere2()
