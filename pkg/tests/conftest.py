import pytest

from telewell import QUARTIC, ProcessConfig, RatePair, VelocityPair

ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def reference():
    """Quartic well, velocities (0.3, -0.3), unit rates."""
    return ProcessConfig(QUARTIC, VelocityPair(0.3, -0.3), RatePair(1.0, 1.0), seed=20240601)


@pytest.fixture(scope="session")
def merged():
    """Quartic well, velocities (0.5, -0.5): one merged attractor."""
    return ProcessConfig(QUARTIC, VelocityPair(0.5, -0.5), RatePair(1.0, 1.0), seed=20240602)


@pytest.fixture(scope="session")
def asymmetric():
    return ProcessConfig(QUARTIC, VelocityPair(0.3, -0.2), RatePair(0.7, 1.6), seed=20240603)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
