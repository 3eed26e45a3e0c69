import numpy as np
import pytest
from models.fields import ControlEnsemble, FieldVector
from models.study import SyntheticWorldSpec
from services import laplacian_basis
from services.grid_geometry import build_grid
from services.laplacian_basis import LaplacianBasisService, compute_laplacian_basis
from services.validation_harness import forced_pattern, generate_synthetic_world, power_law_spectrum


@pytest.fixture(autouse=True)
def isolated_basis_service(tmp_path, monkeypatch):
    """Each test gets its own basis cache directory"""
    service = LaplacianBasisService(str(tmp_path / "basis_cache"))
    monkeypatch.setattr(laplacian_basis, "laplacian_basis_service", service)
    return service


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(6, 12)


@pytest.fixture(scope="session")
def small_basis(small_grid):
    return compute_laplacian_basis(small_grid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_control(small_grid, rng):
    return ControlEnsemble("random", small_grid, rng.standard_normal((10, small_grid.n_grid)))


@pytest.fixture
def synthetic_world(small_grid, small_basis):
    """Controls with a known power-law spectrum and forced members around a known pattern"""
    spectrum = power_law_spectrum(small_basis.n_basis, 8, exponent=1.5)
    forced = forced_pattern(small_basis, 8, amplitude=2.0)
    spec = SyntheticWorldSpec(small_grid, spectrum, forced, n_p=60, n_h=4, seed=3)
    control, historical = generate_synthetic_world(spec, small_basis)
    return control, historical, spectrum, forced


def field(grid, values, role="field"):
    return FieldVector(grid, np.asarray(values, dtype=float), role)
