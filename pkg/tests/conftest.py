import math

import numpy as np
import pytest

from abm.eigen import theta


def homogeneous(k, c1=0.0, c2=1.0, center=(0.0, 0.0)):
    """``(1/sqrt(pi)) e^{i t/2} r^{k/2} (c1 cos(k t/2) + c2 sin(k t/2))`` about ``center``."""
    c = np.asarray(center, dtype=float)

    def f(X):
        X = np.atleast_2d(X)
        t = theta(X, c)
        r = np.linalg.norm(X - c, axis=1)
        return np.exp(0.5j * t) * r ** (k / 2) * (c1 * np.cos(k * t / 2) + c2 * np.sin(k * t / 2)) / math.sqrt(math.pi)

    return f


@pytest.fixture
def hom():
    return homogeneous


# filled by test_acceptance.py; printed after the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
