import numpy as np
import pytest

from perihom.cell import cell_pipeline
from perihom.coefficients import CoefficientFamily, make_family
from perihom.spectral import GridSpec


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines collected during the run."""
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def d2_cell():
    """Shared d=2 scalar-isotropic cell solve on a 32^2 grid."""
    grid = GridSpec(2, 32)
    a = make_family(CoefficientFamily("scalar_isotropic", (1.5, 0.5)), grid)
    return a, cell_pipeline(a, tol=1e-11)


@pytest.fixture(scope="session")
def d1_cell():
    """Shared d=1 profile cell solve (a = 2 + sin on 128 points)."""
    grid = GridSpec(1, 128)
    a = make_family(CoefficientFamily("d1_profile", (2.0, 1.0)), grid)
    return a, cell_pipeline(a, tol=1e-12)
