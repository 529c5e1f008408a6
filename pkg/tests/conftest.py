import numpy as np
import pytest

from sefdensity.simgen import PoissonGammaSpec, gen_poisson_gamma


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def pg_groups():
    """Two Poisson-Gamma groups of 40 individuals with a variance difference."""
    g1 = gen_poisson_gamma(PoissonGammaSpec(10.0, 15.0), 40, (150, 300), seed=1)
    g2 = gen_poisson_gamma(PoissonGammaSpec(10.0, 23.0), 40, (150, 300), seed=2)
    return g1, g2


@pytest.fixture
def pg_null_groups():
    g1 = gen_poisson_gamma(PoissonGammaSpec(10.0, 15.0), 40, (150, 300), seed=3)
    g2 = gen_poisson_gamma(PoissonGammaSpec(10.0, 15.0), 40, (150, 300), seed=4)
    return g1, g2


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
