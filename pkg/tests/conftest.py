import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "bellsim", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("bellsim")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
