import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from plapstab import QuadConfig, make_params

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

STANDARD = [(4, 2.0), (5, 2.0), (4, 3.0), (9, 3.0)]


@pytest.fixture
def quad():
    return QuadConfig()


@pytest.fixture
def p42():
    return make_params(4, 2)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one pass/fail line per acceptance criterion; shown in the terminal summary."""
    def emit(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
