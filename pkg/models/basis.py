"""Orthonormal basis sets and the per-component variance spectra estimated on them"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional
import numpy as np
from models.grid import Grid
from utils.errors import DataError, GridMismatchError


class BasisKind(str, Enum):
    LAPLACIAN = "laplace"
    PRINCIPAL_COMPONENT = "eof"


@dataclass(frozen=True, eq=False)
class BasisSet:
    """
    Columns of `vectors` (n_grid x n_basis) are orthonormal.
    For Laplacian bases column 0 is the constant pattern and `eigenvalues`
    holds the matching eigenvalues of the projected operator.
    """
    grid: Grid
    kind: BasisKind
    vectors: np.ndarray
    eigenvalues: Optional[np.ndarray] = None
    kernel: Optional[str] = None

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=float)
        if vectors.ndim != 2 or vectors.shape[0] != self.grid.n_grid:
            raise DataError(f"basis matrix has shape {vectors.shape}, expected ({self.grid.n_grid}, n_basis)")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "kind", BasisKind(self.kind))

    @property
    def n_basis(self):
        return self.vectors.shape[1]

    def leading(self, kappa):
        return self.vectors[:, :kappa]

    def require_grid(self, grid):
        if grid != self.grid:
            raise GridMismatchError(f"basis is on grid {self.grid.descriptor}, data on {grid.descriptor}")


@dataclass(frozen=True, eq=False)
class VarianceSpectrum:
    """Empirical variances of control fields along each basis component"""
    basis: BasisSet
    lambdas: np.ndarray
    source_n: int

    def __post_init__(self):
        lambdas = np.asarray(self.lambdas, dtype=float)
        if lambdas.shape != (self.basis.n_basis,):
            raise DataError(f"spectrum has {lambdas.size} entries for {self.basis.n_basis} basis vectors")
        if np.any(lambdas < 0):
            raise DataError("variance spectrum has negative entries")
        lambdas.setflags(write=False)
        object.__setattr__(self, "lambdas", lambdas)

    @property
    def std(self):
        return np.sqrt(self.lambdas)
