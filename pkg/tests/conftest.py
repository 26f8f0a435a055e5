import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rebench.data import ProxyNetwork, TargetSeries, YearAxis

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture]
)
settings.load_profile("default")


def make_network(X, start=1900, ids=None, mask=None):
    X = np.asarray(X, dtype=float)
    axis = YearAxis(start, X.shape[0])
    if ids is None:
        ids = tuple(f"p{j}" for j in range(X.shape[1]))
    if mask is None:
        mask = np.ones(X.shape, dtype=bool)
    return ProxyNetwork(axis, tuple(ids), np.where(mask, X, 0.0), mask)


def make_target(y, start=1900):
    y = np.asarray(y, dtype=float)
    return TargetSeries(YearAxis(start, y.size), y)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_problem(rng):
    """Ten noisy proxies, two of which carry the target, over 120 years."""
    n, p = 120, 10
    y = rng.standard_normal(n)
    X = rng.standard_normal((n, p))
    X[:, 0] += 1.5 * y
    X[:, 3] -= 0.8 * y
    return make_network(X), make_target(y)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    def _record(label, ok, detail):
        line = f"{label}: {'PASS' if ok else 'FAIL'} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
