import math
import time

import numpy as np
import pytest

from coulomb_lab.potential import Potential, solve_equilibrium_radial

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def quad():
    return Potential.quadratic()


@pytest.fixture(scope="session")
def quartic():
    return Potential.quartic()


@pytest.fixture(scope="session")
def em_quad(quad):
    return solve_equilibrium_radial(quad)


@pytest.fixture(scope="session")
def em_quartic(quartic):
    return solve_equilibrium_radial(quartic)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def uniform_disk(rng, n, radius=1.0):
    r = radius * np.sqrt(rng.uniform(size=n))
    th = rng.uniform(0, 2 * math.pi, size=n)
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fekete400(quad, em_quad):
    """Fekete minimizer at n=400 for the quadratic potential, with its wall time."""
    from coulomb_lab.energy import minimize_fekete

    t0 = time.perf_counter()
    res = minimize_fekete(uniform_disk(np.random.default_rng(0), 400), quad, em=em_quad)
    return res, time.perf_counter() - t0
