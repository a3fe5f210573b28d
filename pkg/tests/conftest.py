import numpy as np
import pytest

from nonlocal_phasefield.grid import build_grid
from nonlocal_phasefield.kernel import KernelSpec, NonlocalOperator
from nonlocal_phasefield.potential import HardLog
from nonlocal_phasefield.solver import Model, SystemState


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid64():
    return build_grid(1, [1.0], [64])


@pytest.fixture(scope="session")
def convex_model():
    """Reference regime with lambda0 > 0: strong gaussian kernel, double-well hardlog."""
    g = build_grid(1, [1.0], [64])
    op = NonlocalOperator(KernelSpec("gaussian", 10.0, 0.1), g)
    return Model(op, HardLog(1.0, 2.5), alpha=0.5, dt=0.02)


def smooth_state(grid, theta_amp=1.0, chi_mean=0.1, chi_amp=0.3):
    x = grid.coordinates()[:, 0]
    return SystemState(theta_amp * np.sin(np.pi * x), chi_mean + chi_amp * np.cos(np.pi * x), 0.0)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
