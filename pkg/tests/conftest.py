import os

import pytest

from chicrit.ensembles import RngStream

# pass/fail lines from tests/test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def stream():
    return RngStream(12345)


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


def pytest_configure(config):
    os.environ.setdefault("OMP_NUM_THREADS", "1")
