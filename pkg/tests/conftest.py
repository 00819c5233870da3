import os

import pytest
from hypothesis import HealthCheck, settings

from hawkes_lab.convolve import series_for
from hawkes_lab.moments import moment_table
from hawkes_lab.presets import REFERENCE_GRID, exponential_model, reference_model

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_lines():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ref_model():
    return reference_model()


@pytest.fixture(scope="session")
def ref_series(ref_model):
    return series_for(ref_model, REFERENCE_GRID)


@pytest.fixture(scope="session")
def ref_moments(ref_model, ref_series):
    return moment_table(ref_model, ref_series)


@pytest.fixture(scope="session")
def exp_model():
    return exponential_model()
