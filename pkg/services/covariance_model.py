"""Empirical covariance of control trend fields and its basis-truncated parameterizations"""
import numpy as np
import scipy.linalg
from models.basis import BasisKind, BasisSet, VarianceSpectrum
from utils.constants import PC_RANK_TOLERANCE, SIGN_TOLERANCE
from utils.errors import DataError, EigensolverError, GridMismatchError, InsufficientDataError
from utils.helpers import first_nonzero_positive


def anomaly_matrix(ens):
    """Rows (z_k - mean) / sqrt(n_P); its Gram matrix A^T A is the empirical covariance"""
    if ens.n_p < 2:
        raise InsufficientDataError(f"{ens.model_id}: covariance needs at least 2 fields")
    matrix = ens.matrix
    return (matrix - matrix.mean(axis=0)) / np.sqrt(ens.n_p)


def empirical_covariance(ens):
    """Dense n_grid x n_grid covariance with divisor n_P; meant for small grids and checks"""
    anomalies = anomaly_matrix(ens)
    cov = anomalies.T @ anomalies
    return 0.5 * (cov + cov.T)


def principal_components(ens):
    """EOFs and their variances from the thin SVD of the anomaly matrix"""
    anomalies = anomaly_matrix(ens)
    try:
        _, singular, vt = scipy.linalg.svd(anomalies, full_matrices=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise EigensolverError(f"{ens.model_id}: SVD of anomalies failed: {e}") from e
    variances = singular ** 2
    if variances.size == 0 or variances[0] <= 0:
        raise InsufficientDataError(f"{ens.model_id}: control fields have no variance")
    keep = variances > PC_RANK_TOLERANCE * variances[0]
    vectors = first_nonzero_positive(vt[keep].T, SIGN_TOLERANCE)
    basis = BasisSet(ens.grid, BasisKind.PRINCIPAL_COMPONENT, vectors)
    return basis, VarianceSpectrum(basis, variances[keep], ens.n_p)


def empirical_basis_variances(ens, basis):
    """Per-component variance of the projected control fields, i.e. diag(B^T C B)"""
    basis.require_grid(ens.grid)
    projected = anomaly_matrix(ens) @ basis.vectors
    return VarianceSpectrum(basis, np.sum(projected ** 2, axis=0), ens.n_p)


def control_spectrum(ens, basis_kind, laplacian_basis=None):
    """Basis and spectrum for one control ensemble under the requested parameterization"""
    if BasisKind(basis_kind) == BasisKind.PRINCIPAL_COMPONENT:
        return principal_components(ens)
    if laplacian_basis is None:
        raise DataError("a Laplacian basis is required for the Laplace parameterization")
    return laplacian_basis, empirical_basis_variances(ens, laplacian_basis)


def project_field(basis, field, kappa):
    """First kappa coefficients of B^T f"""
    if not 1 <= kappa <= basis.n_basis:
        raise DataError(f"kappa must lie in [1, {basis.n_basis}], got {kappa}")
    basis.require_grid(field.grid)
    return basis.leading(kappa).T @ field.values


def area_weights(grid):
    """sqrt(cos lat) scaled so the squared weights average to one"""
    cos_lat = np.cos(grid.lats)
    return np.sqrt(cos_lat / cos_lat.mean())


def area_weight_field(grid, field):
    if field.grid != grid:
        raise GridMismatchError(f"field grid {field.grid.descriptor} does not match {grid.descriptor}")
    return field.with_values(field.values * area_weights(grid))


def area_weight_matrix(grid, matrix):
    return np.asarray(matrix) * area_weights(grid)[np.newaxis, :]


def truncated_covariance(basis, spectrum, kappa):
    """C_kappa = B_kappa diag(lambda_1..lambda_kappa) B_kappa^T"""
    if spectrum.basis is not basis:
        raise DataError("spectrum was estimated on a different basis")
    if not 1 <= kappa <= basis.n_basis:
        raise DataError(f"kappa must lie in [1, {basis.n_basis}], got {kappa}")
    leading = basis.leading(kappa)
    return (leading * spectrum.lambdas[:kappa]) @ leading.T
