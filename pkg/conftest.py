import numpy as np
import pytest

from src.models.config import Phantom, RunConfig, SolverSettings
from src.models.convection import ConvectionField
from src.models.grids import ComplexGrid, Potential
from src.services.dbar_forward import k_grid, scattering_grid
from src.services.phantoms import make_phantom, taper


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: full-resolution numerical checks (minutes)')


def gaussian_potential(nx, L=2.0, amplitude=0.3, width=0.3, support_radius=0.8, center=0j):
    """Smooth tapered Gaussian potential used across the solver tests."""
    grid = ComplexGrid.from_function(
        nx, L,
        lambda z: amplitude * np.exp(-np.abs(z - center) ** 2 / width ** 2) * taper(np.abs(z), support_radius),
    )
    return Potential(grid, support_radius)


@pytest.fixture
def settings():
    return SolverSettings(tol=1e-11, max_iterations=600, restart=60)


@pytest.fixture
def q64():
    return gaussian_potential(64)


@pytest.fixture
def q128():
    return gaussian_potential(128)


@pytest.fixture
def zero_field_64():
    zeros = np.zeros((64, 64))
    return ConvectionField(zeros, zeros, 2.0, 0.8, 'zero')


@pytest.fixture
def gauss_phantom():
    return Phantom(kind='gauss', amplitude=0.3, widths=[0.25], support_radius=0.8)


@pytest.fixture
def gauss_field_128(gauss_phantom):
    return make_phantom(gauss_phantom, 128, 2.0)


@pytest.fixture
def small_config(tmp_path):
    """A configuration small enough to run every pipeline stage in seconds."""
    return RunConfig(
        nx=64, L=2.0, K=4.0, kgrid_n=16, modes=16, radial_degree=24,
        boundary_nodes=64, series_n=8, kmax=4.0, directions=4,
        output_dir=str(tmp_path / 'run'),
    )


@pytest.fixture(scope='session')
def volume_transform_03():
    """t of a Gaussian potential with max |q| = 0.3 at nx = 128, K = 8."""
    q = gaussian_potential(128, amplitude=0.3)
    return q, scattering_grid(q, k_grid(64, 10.0), 8.0, SolverSettings(tol=1e-11, workers=4))


@pytest.fixture(scope='session')
def volume_transform_05():
    """t of a Gaussian potential with max |q| = 0.5 at nx = 128, K = 8."""
    q = gaussian_potential(128, amplitude=0.5)
    return q, scattering_grid(q, k_grid(64, 10.0), 8.0, SolverSettings(tol=1e-11, workers=4))
