"""
Discretized spherical Laplace operator and its ordered orthonormal eigenbasis.
The operator is represented through its Green's function integrated over grid cells;
its leading eigenvectors are the large-scale patterns.
"""
import logging
import math
import threading
import numpy as np
import scipy.linalg
from config import Config
from models.basis import BasisKind, BasisSet
from models.storage import load_basis_cache, save_basis_cache
from services.grid_geometry import cell_radii, great_circle_matrix
from utils.constants import BASIS_READY_MSG, KERNEL_AS_PRINTED, KERNEL_HALF_ANGLE, KERNEL_VARIANTS, SIGN_TOLERANCE
from utils.errors import DataError, EigensolverError, GridError, NumericalError, StaleCacheError
from utils.helpers import first_nonzero_positive

logger = logging.getLogger(__name__)


def _kernel(distances, kernel):
    with np.errstate(divide="ignore"):
        if kernel == KERNEL_HALF_ANGLE:
            return -np.log(2.0 * np.sin(distances / 2.0) ** 2) / (4.0 * math.pi)
        if kernel == KERNEL_AS_PRINTED:
            # sin(d^2) changes sign for d > sqrt(pi); the magnitude keeps the log defined
            magnitude = np.abs(2.0 * np.sin(distances ** 2))
            return -(4.0 / math.pi) * np.log(np.maximum(magnitude, np.finfo(float).tiny))
    raise DataError(f"unknown kernel variant {kernel!r}; expected one of {KERNEL_VARIANTS}")


def assemble_laplacian_matrix(grid, kernel=KERNEL_HALF_ANGLE):
    """Symmetric n_grid x n_grid matrix of the cell-integrated Green's function"""
    cos_lat = np.cos(grid.lats)
    if np.any(cos_lat <= 0):
        raise GridError("grid has a cell centred on a pole; cos(lat) must be positive")
    distances = great_circle_matrix(grid)
    np.fill_diagonal(distances, 1.0)  # placeholder, the diagonal is overwritten below
    weights = grid.d_lat * grid.d_lon * np.sqrt(np.outer(cos_lat, cos_lat))
    matrix = _kernel(distances, kernel) * weights
    rho = cell_radii(grid)
    np.fill_diagonal(matrix, 0.25 * rho ** 2 * (1.0 - 2.0 * np.log(rho / math.sqrt(2.0))))
    matrix = 0.5 * (matrix + matrix.T)
    if not np.all(np.isfinite(matrix)):
        raise NumericalError(f"Laplacian matrix for kernel {kernel!r} has non-finite entries")
    return matrix


def project_out_constant(matrix):
    """Q A Q with Q = I - 11^T/n, written as double centring"""
    matrix = np.asarray(matrix, dtype=float)
    row_means = matrix.mean(axis=1, keepdims=True)
    col_means = matrix.mean(axis=0, keepdims=True)
    projected = matrix - row_means - col_means + matrix.mean()
    return 0.5 * (projected + projected.T)


def _householder_to_constant(n):
    """v with (I - 2vv^T/v^Tv) e_1 = 1/sqrt(n)"""
    v = np.full(n, 1.0 / math.sqrt(n))
    v[0] -= 1.0
    return v, float(v @ v)


def compute_laplacian_basis(grid, kernel=KERNEL_HALF_ANGLE):
    """
    Eigenbasis of the projected operator: the constant pattern first, then the
    remaining eigenvectors by descending eigenvalue (global to fine scales).
    The constant direction is deflated exactly with a Householder reflection.
    """
    n = grid.n_grid
    projected = project_out_constant(assemble_laplacian_matrix(grid, kernel))
    v, vv = _householder_to_constant(n)
    reflected = projected - (2.0 / vv) * np.outer(v, v @ projected)
    reflected = reflected - (2.0 / vv) * np.outer(reflected @ v, v)
    restricted = reflected[1:, 1:]
    restricted = 0.5 * (restricted + restricted.T)
    try:
        eigenvalues, eigenvectors = scipy.linalg.eigh(restricted)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise EigensolverError(f"symmetric eigensolve failed on grid {grid.descriptor}: {e}") from e
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    padded = np.zeros((n, n - 1))
    padded[1:, :] = eigenvectors[:, order]
    complement = padded - (2.0 / vv) * np.outer(v, v @ padded)
    vectors = np.empty((n, n))
    vectors[:, 0] = 1.0 / math.sqrt(n)
    vectors[:, 1:] = complement
    vectors = first_nonzero_positive(vectors, SIGN_TOLERANCE)
    return BasisSet(grid, BasisKind.LAPLACIAN, vectors, np.concatenate([[0.0], eigenvalues]), kernel)


class LaplacianBasisService:
    """Computes Laplacian bases once per (grid, kernel) and keeps them in memory and on disk"""
    def __init__(self, cache_dir=None):
        self.cache_dir = cache_dir
        self._bases = {}
        self._lock = threading.RLock()

    def get_basis(self, grid, kernel=KERNEL_HALF_ANGLE):
        key = (grid.descriptor, kernel)
        with self._lock:
            if key in self._bases:
                return self._bases[key]
            basis = self._load(grid, kernel)
            if basis is None:
                basis = compute_laplacian_basis(grid, kernel)
                if self.cache_dir:
                    save_basis_cache(self.cache_dir, basis)
            logger.info(BASIS_READY_MSG.format(n_lat=grid.n_lat, n_lon=grid.n_lon, n_grid=grid.n_grid))
            self._bases[key] = basis
            return basis

    def _load(self, grid, kernel):
        if not self.cache_dir:
            return None
        try:
            return load_basis_cache(self.cache_dir, grid, kernel)
        except StaleCacheError as e:
            logger.warning(f"⚠️ Rejecting stale basis cache: {e}")
            return None

    def cached_grids(self):
        with self._lock:
            return sorted(f"{n_lat}x{n_lon}/{kernel}" for ((n_lat, n_lon), kernel) in self._bases)


laplacian_basis_service = None
def get_laplacian_basis_service():
    """Get or create the shared basis service"""
    global laplacian_basis_service
    if laplacian_basis_service is None:
        laplacian_basis_service = LaplacianBasisService(Config.CACHE_DIR)
    return laplacian_basis_service
