import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lyapmodal.spectral import eigendecompose
from lyapmodal.systems import random_stable

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

WORKED = np.array([[0.0, 1.0], [-2.0, -3.0]])
ROTATION = np.array([[-1.0, 2 * np.pi], [-2 * np.pi, -1.0]])
DIAG = np.diag([-1.0, -2.0])


@functools.lru_cache(maxsize=None)
def corpus(count=100, nmax=30):
    """Deterministic random stable systems with n cycling through 2..nmax."""
    out = []
    for seed in range(count):
        n = 2 + seed % (nmax - 1)
        a = random_stable(n, seed)
        out.append((a, eigendecompose(a)))
    return tuple(out)


@pytest.fixture(scope="session")
def big_corpus():
    return corpus()


@pytest.fixture(scope="session")
def small_corpus():
    return corpus(30, 12)


def rel(x, y):
    """max|x - y| / max|y| (elementwise relative on a common scale)."""
    x, y = np.asarray(x), np.asarray(y)
    return float(np.max(np.abs(x - y)) / max(np.max(np.abs(y)), 1e-300))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
