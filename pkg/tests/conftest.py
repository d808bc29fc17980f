import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from polymerchain.critical import build_frame
from polymerchain.model import dimer_ensemble

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = {}


def record(criterion, passed, detail):
    line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(str(k).rstrip("abcdefgh")), str(k))):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def dimer():
    return dimer_ensemble(0.5)


@pytest.fixture(scope="session")
def dimer_frame(dimer):
    return build_frame(dimer, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SQRT3 = math.sqrt(3.0)
