import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kolmofrac import QuadratureSpec, heat_pair, kolmogorov_pair

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def kolmo():
    return kolmogorov_pair()


@pytest.fixture
def heat1():
    return heat_pair(1)


@pytest.fixture
def quad():
    return QuadratureSpec()


def fd_grad(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


ACCEPTANCE = {}


def record(number, title, ok, detail):
    """Store the outcome of one acceptance criterion for the terminal summary."""
    ACCEPTANCE[number] = (title, bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {k:2d}. {title}: {detail}")
