import os

import pytest
from hypothesis import HealthCheck, settings

from clothfold.cloth_sim import ClothParams, corner_index, grasp, init_cloth

settings.register_profile(
    "clothfold", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "clothfold"))

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture
def flat():
    return init_cloth()


@pytest.fixture
def grasped():
    s = init_cloth()
    return grasp(s, s.positions[corner_index(13, "top-left")])


@pytest.fixture
def params():
    return ClothParams()



def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
