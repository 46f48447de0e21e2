import numpy as np
import pytest

from spadtrack.config import SensorConfig


@pytest.fixture
def cfg():
    return SensorConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.SCORECARD:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.SCORECARD):
            terminalreporter.write_line(line)
