import numpy as np
import pytest

from romfwi.forward import ForwardModel
from romfwi.models import snap_to_grid
from romfwi.rom import SpectralOracle
from romfwi.wave_sim import ArrayGeometry, Grid2D, Pulse


def random_oracle(rng, size=20, m=2, tau=0.0435, spread=(0.3, 3.0)):
    """Well-conditioned oracle: ``tau sqrt(lambda)`` spread over ``spread``."""
    w = rng.uniform(*spread, size) / tau
    Y, _ = np.linalg.qr(rng.standard_normal((size, size)))
    A = (Y * w**2) @ Y.T
    A = 0.5 * (A + A.T)
    U0 = rng.standard_normal((size, m))
    return SpectralOracle(A=A, U0=U0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def tiny_model():
    """41x41 grid on 1 km, four sensors at 100 m depth, n = 6."""
    grid = Grid2D.from_extent(1000.0, 1000.0, 25.0)
    geo = snap_to_grid(ArrayGeometry.line(4, 100.0, 100.0, 500.0), grid)
    return ForwardModel(grid, geo, Pulse.default(), 0.0435, 6, cutoff_hz=30.0)


@pytest.fixture(scope="session")
def tiny_truth(tiny_model):
    X, Z = tiny_model.grid.mesh()
    return 3000.0 + 400.0 * np.exp(-((X - 500.0) ** 2 + (Z - 500.0) ** 2) / (2 * 120.0**2))


@pytest.fixture(scope="session")
def noisy_instance():
    """Layered-and-faulted model with 1% noise: setup, raw noisy series and clean series."""
    from romfwi.config import builtin_config
    from romfwi.experiments import build_setup, observed_series

    setup = build_setup(builtin_config("marmousi_noisy"))
    raw = observed_series(setup, symmetric=False)
    clean = setup.model.series(setup.truth)
    return setup, raw, clean


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
