import numpy as np
import pytest

from cpkdim.catalog import load_map
from cpkdim.sampler import EmpiricalMeasure, sample_equilibrium


def circle_cloud(n, seed=0):
    """Uniform measure on the unit circle of CP^1 (the equilibrium measure of z^2)."""
    t = np.random.default_rng(seed).uniform(0, 2 * np.pi, n)
    return EmpiricalMeasure.uniform(np.stack([np.exp(1j * t), np.ones(n)], axis=1))


def torus_cloud(n, seed=0):
    """Uniform measure on the torus |z| = |w| = |t| in CP^2."""
    t = np.random.default_rng(seed).uniform(0, 2 * np.pi, (n, 2))
    return EmpiricalMeasure.uniform(np.stack([np.exp(1j * t[:, 0]), np.exp(1j * t[:, 1]),
                                              np.ones(n)], axis=1))


@pytest.fixture(scope="session")
def maps():
    names = ["power2_k1", "power3_k1", "chebyshev2", "lattes4", "power2_k2", "power3_k2",
             "skew2", "product2"]
    return {n: load_map(n) for n in names}


@pytest.fixture(scope="session")
def clouds(maps):
    """Lazily sampled 10^5-point depth-30 equilibrium clouds, shared across tests."""
    cache = {}

    def get(name, count=100_000):
        key = (name, count)
        if key not in cache:
            cache[key] = sample_equilibrium(maps[name], depth=30, count=count, seed=1)
        return cache[key]

    return get


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
