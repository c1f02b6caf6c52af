import sys

import numpy as np
import pytest

from glaves.checks import random_fixture


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def small_pair():
    return random_fixture(1, n=80, m=60, p=3)


@pytest.fixture
def weighted_pair():
    return random_fixture(2, n=80, m=60, p=3, weighted=True)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
