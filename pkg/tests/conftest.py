import numpy as np
import pytest

from mtfem.mesh import build_structured, perturb, refine_nvb

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def nvb_mesh():
    m = build_structured(2, 2, (-1.0, 1.0))
    m = refine_nvb(m, range(m.n_cells))
    m = refine_nvb(m, range(m.n_cells))
    return perturb(m, 0.15, 3)


@pytest.fixture(scope="session")
def mesh3d():
    return perturb(build_structured(3, 2), 0.12, 2)
