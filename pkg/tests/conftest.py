import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kinvec.data import GaussianData
from kinvec.grid import PhaseGrid

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def grid1():
    return PhaseGrid.uniform(1, (-6, 6), (-6, 6), 97, 97)


@pytest.fixture
def gauss1(grid1):
    return GaussianData(1).sample(grid1)


@pytest.fixture
def grid2():
    return PhaseGrid.uniform(2, (-6, 6), (-6, 6), 33, 33)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for the terminal summary."""

    def _report(label, passed, detail=""):
        ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'} {label} {detail}".rstrip())
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
