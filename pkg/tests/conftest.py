import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stlgcp import PointPattern, SpaceTimeWindow

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

STUDY = SpaceTimeWindow.from_bounds((0, 1, 0, 1, 0, 50))


@pytest.fixture
def study_window():
    return STUDY


def uniform_pattern(n, window=STUDY, seed=0):
    rng = np.random.default_rng(seed)
    lo, hi = window.lower, window.upper
    return PointPattern(lo + rng.random((n, 3)) * (hi - lo), window)
