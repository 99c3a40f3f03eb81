import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from frictionhjb import toy
from frictionhjb.scenario import load_scenario

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def toy_s():
    return toy.toy_scenario()


@pytest.fixture(scope="session")
def coarse_toy():
    """Toy on a coarse grid for solver tests that do not need acceptance resolution."""
    return toy.toy_scenario(h=1e-2, delta=1e-2)


@pytest.fixture(scope="session")
def linear_s():
    return load_scenario(toy.data_path("linear.scn"))


@pytest.fixture(scope="session")
def coarse_table(coarse_toy):
    from frictionhjb.hjb import solve_value

    return solve_value(coarse_toy)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def vex_oracle(t, v, C=1.0, r=0.8, grid=200001):
    """Value by direct minimization over the stopping speed ``w``.

    From ``v`` the fastest way to reach speed ``w >= max(v, 0)`` accelerates
    at 2 below zero and at 1/2 above; slowing down on ``v > 0`` uses rate 4.
    """
    t, v = float(t), float(v)
    top = max(v, r, C ** (-1.0 / 3.0)) + 3.0
    w = np.linspace(r, top, grid)
    if v >= r:
        w = np.append(w, v)
    up = np.where(v < 0, -v / 2.0 + 2.0 * w, 2.0 * (w - v))
    down = (v - w) / 4.0
    dur = np.where(w >= v, up, down)
    return float(np.min(C * (t + dur) + 1.0 / w ** 2))


def vex_closed(t, v, C=1.0, r=0.8):
    """Vectorized closed form: accelerate to ``max(v*, r)`` unless already beyond it."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    w = max(C ** (-1.0 / 3.0), r)
    with np.errstate(divide="ignore"):
        hold = C * t + 1.0 / np.where(v == 0, 1.0, v) ** 2
    go = C * (t + np.where(v < 0, -v / 2.0 + 2.0 * w, 2.0 * (w - v))) + 1.0 / w ** 2
    return np.where(v >= w, hold, go)
