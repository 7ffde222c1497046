import math

import pytest

from crossing_lab import INF, make_distribution


@pytest.fixture
def two_atom():
    return make_distribution([(0.0, 0.5), (1.0, 0.5)])


@pytest.fixture
def zero_inf():
    return make_distribution([(0.0, 0.5), (INF, 0.5)])


@pytest.fixture
def srw():
    return make_distribution([(0.0, 1.0)])


def constant_block_z(lam, r):
    """Closed-form block weight for the constant potential lam."""
    e = math.exp(lam)
    s = math.sqrt(e * e - 1.0)
    rp, rm = e + s, e - s
    return math.exp(-lam) * (rp - rm) / (2.0 * (rp**r - rm**r))


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
