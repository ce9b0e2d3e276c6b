import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nmcdetect.model import Scenario, build_toeplitz_covariance

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def cn(rng, *shape):
    """Standard complex normal array."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_hpd(rng, N, cond_boost=1.0):
    B = cn(rng, N, N)
    return B @ B.conj().T + cond_boost * np.eye(N)


def random_batch(rng, N, p, L, mean_scale=1.0):
    """One ``(x, X_L, A)`` draw with correlated, nonzero-mean data."""
    R = random_hpd(rng, N)
    G = np.linalg.cholesky(R)
    mu = mean_scale * cn(rng, N)
    X = mu[:, None] + G @ cn(rng, N, L + 1)
    A = cn(rng, N, p)
    return X[:, 0], X[:, 1:], A


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def toy_scenario():
    """Small matched scenario with a nonzero clutter mean."""
    N, p, L = 6, 2, 14
    R = build_toeplitz_covariance(N, 0.9)
    n = np.arange(N)
    A = np.stack([np.exp(-2j * np.pi * f * n) for f in (0.1, -0.27)], axis=1)
    alpha = np.array([1.0 + 0.5j, -0.3j])
    mu = 2.0 * np.exp(-2j * np.pi * 0.33 * n)
    return Scenario(N=N, p=p, L=L, R=R, mu=mu, A=A, p0=A @ alpha, eps=0.9)


# -- acceptance report ------------------------------------------------------------

ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def report_criterion():
    """Record (and print) one PASS/FAIL line for an acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES[(number, detail.split(":")[0])] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: (k[0], k[1])):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
