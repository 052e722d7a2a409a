import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hjlab import JunctionScenario, PhaseSchedule, vee

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture
def abs_h():
    return vee()


@pytest.fixture
def constant_light(abs_h):
    return JunctionScenario.homogeneous(abs_h, [0.0], [PhaseSchedule.constant(0.5)])


@pytest.fixture
def half_green(abs_h):
    return JunctionScenario.homogeneous(abs_h, [0.0], [PhaseSchedule((0.0, 0.5), (1.0, 0.0))])


@pytest.fixture
def rng():
    return np.random.default_rng(7)
