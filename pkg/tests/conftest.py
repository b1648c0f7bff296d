import numpy as np
import pytest
from hypothesis import settings

from activereg import scenarios

settings.register_profile("suite", max_examples=50, deadline=None)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def scen_a():
    return scenarios.scenario_a()


@pytest.fixture(scope="session")
def scen_b():
    return scenarios.scenario_b()


@pytest.fixture(scope="session")
def scen_c():
    return scenarios.scenario_c()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one verdict line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
