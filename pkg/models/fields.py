"""Trend fields, ensembles of trend fields, and gridded time series"""
from dataclasses import dataclass
import numpy as np
from models.grid import Grid
from utils.errors import CellCountError, GridMismatchError, InsufficientDataError, NonFiniteValueError, DegenerateSeriesError


def _as_matrix(values, grid, what):
    matrix = np.array(values, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix[np.newaxis, :]
    if matrix.ndim != 2 or matrix.shape[1] != grid.n_grid:
        found = matrix.shape[-1] if matrix.ndim else 0
        raise CellCountError(grid.n_grid, found)
    if not np.all(np.isfinite(matrix)):
        raise NonFiniteValueError(f"{what} contains non-finite values")
    return matrix


def require_same_grid(*items):
    grids = {item.grid for item in items}
    if len(grids) > 1:
        raise GridMismatchError(f"objects live on different grids: {sorted(g.descriptor for g in grids)}")


@dataclass(frozen=True, eq=False)
class FieldVector:
    """A length-n_grid trend field (temperature per 25 years) bound to its grid"""
    grid: Grid
    values: np.ndarray
    role: str = "field"
    model_id: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.shape[0] != self.grid.n_grid:
            raise CellCountError(self.grid.n_grid, values.size)
        if not np.all(np.isfinite(values)):
            raise NonFiniteValueError(f"field {self.model_id or self.role} contains non-finite values")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_values(self, values):
        return FieldVector(self.grid, values, self.role, self.model_id)


@dataclass(frozen=True, eq=False)
class ControlEnsemble:
    """Trend fields z_1..z_nP from one pre-industrial control model (rows of `matrix`)"""
    model_id: str
    grid: Grid
    matrix: np.ndarray

    def __post_init__(self):
        matrix = _as_matrix(self.matrix, self.grid, f"control ensemble {self.model_id}")
        if matrix.shape[0] < 2:
            raise InsufficientDataError(
                f"control ensemble {self.model_id} needs at least 2 fields, got {matrix.shape[0]}")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def from_fields(cls, model_id, fields):
        fields = list(fields)
        if not fields:
            raise InsufficientDataError(f"control ensemble {model_id} is empty")
        require_same_grid(*fields)
        return cls(model_id, fields[0].grid, np.vstack([f.values for f in fields]))

    @property
    def n_p(self):
        return self.matrix.shape[0]

    @property
    def fields(self):
        return [FieldVector(self.grid, row, "control", self.model_id) for row in self.matrix]


@dataclass(frozen=True, eq=False)
class ForcedEnsemble:
    """Trend fields x_1..x_nH from one historical (forced) model"""
    model_id: str
    grid: Grid
    matrix: np.ndarray

    def __post_init__(self):
        matrix = _as_matrix(self.matrix, self.grid, f"forced ensemble {self.model_id}")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def from_fields(cls, model_id, fields):
        fields = list(fields)
        if not fields:
            raise InsufficientDataError(f"forced ensemble {model_id} is empty")
        require_same_grid(*fields)
        return cls(model_id, fields[0].grid, np.vstack([f.values for f in fields]))

    @property
    def n_h(self):
        return self.matrix.shape[0]

    def member(self, k):
        return FieldVector(self.grid, self.matrix[k], "historical", self.model_id)

    def mean(self):
        return FieldVector(self.grid, self.matrix.mean(axis=0), "historical", self.model_id)


@dataclass(frozen=True, eq=False)
class GriddedSeries:
    """Gridded series: `times` in decimal years, `values` is n_time x n_grid"""
    grid: Grid
    times: np.ndarray
    values: np.ndarray
    role: str = "series"
    model_id: str = ""

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1:
            raise DegenerateSeriesError("times must be one-dimensional")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise DegenerateSeriesError("times must be strictly increasing")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != times.size:
            raise DegenerateSeriesError(
                f"series has {values.shape[0] if values.ndim == 2 else values.size} rows for {times.size} time stamps")
        if values.shape[1] != self.grid.n_grid:
            raise CellCountError(self.grid.n_grid, values.shape[1])
        if not np.all(np.isfinite(values)):
            raise NonFiniteValueError(f"series {self.model_id or self.role} contains missing or non-finite values")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def n_time(self):
        return self.times.size

    def steps_per_year(self):
        if self.n_time < 2:
            raise DegenerateSeriesError("need at least two time stamps to infer the sampling rate")
        return max(1, int(round(1.0 / float(np.median(np.diff(self.times))))))

    def slice(self, start, stop):
        return GriddedSeries(self.grid, self.times[start:stop], self.values[start:stop], self.role, self.model_id)
