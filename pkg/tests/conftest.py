import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from besselvar.measure import MeasureContext

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def ctx1():
    return MeasureContext(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
