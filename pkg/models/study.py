"""Validation-study inputs and per-fit records"""
import math
from dataclasses import dataclass, field, asdict
from typing import List, Optional
import numpy as np
from models.fields import ControlEnsemble, ForcedEnsemble, FieldVector
from models.fitting import FitOptions
from models.grid import Grid
from utils.constants import DEFAULT_CREDIBLE_LEVEL
from utils.errors import DataError, InsufficientDataError


@dataclass(frozen=True, eq=False)
class StudyConfig:
    controls: List[ControlEnsemble]
    historicals: List[ForcedEnsemble]
    options: FitOptions = field(default_factory=FitOptions)
    base_seed: int = 0
    credible_level: float = DEFAULT_CREDIBLE_LEVEL

    def __post_init__(self):
        if not 0.0 < self.credible_level < 1.0:
            raise DataError(f"credible_level must lie in (0, 1), got {self.credible_level}")
        if not self.controls or not self.historicals:
            raise InsufficientDataError("a study needs at least one control and one historical ensemble")
        for ensemble in self.historicals:
            if ensemble.n_h < 2:
                raise InsufficientDataError(
                    f"historical ensemble {ensemble.model_id} needs >= 2 members for leave-one-out")

    @property
    def grid(self):
        return self.controls[0].grid


@dataclass
class FitRecord:
    c: int
    f: int
    k: int
    control_id: str = ""
    historical_id: str = ""
    beta_mean: float = math.nan
    beta_sd: float = math.nan
    ci_low: float = math.nan
    ci_high: float = math.nan
    contains_one: bool = False
    crps: float = math.nan
    kappa_post: int = 0
    converged: bool = False
    status: str = "ok"
    error: str = ""

    @property
    def ok(self):
        return self.status == "ok"

    def as_row(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SyntheticWorldSpec:
    """
    Known-truth world: controls drawn with `true_spectrum` along the Laplacian basis,
    forced members drawn around `true_forced_field` with `observed_spectrum`
    (defaults to the control spectrum; a different one emulates model mismatch).
    With logvar_sd > 0 the members' variances are drawn once per world as
    observed * exp(logvar_sd * N(0, 1)), the same hierarchy the regression assumes.
    """
    grid: Grid
    true_spectrum: np.ndarray
    true_forced_field: FieldVector
    n_p: int
    n_h: int
    seed: int
    observed_spectrum: Optional[np.ndarray] = None
    logvar_sd: float = 0.0
    control_id: str = "synthetic-control"
    historical_id: str = "synthetic-historical"

    def __post_init__(self):
        spectrum = np.asarray(self.true_spectrum, dtype=float)
        if np.any(spectrum < 0):
            raise DataError("synthetic spectrum must be non-negative")
        object.__setattr__(self, "true_spectrum", spectrum)
        if self.observed_spectrum is not None:
            observed = np.asarray(self.observed_spectrum, dtype=float)
            if observed.shape != spectrum.shape or np.any(observed < 0):
                raise DataError("observed spectrum must match the control spectrum in length and be non-negative")
            object.__setattr__(self, "observed_spectrum", observed)
        if not (math.isfinite(self.logvar_sd) and self.logvar_sd >= 0):
            raise DataError(f"logvar_sd must be non-negative, got {self.logvar_sd}")
        if self.n_p < 2 or self.n_h < 1:
            raise InsufficientDataError("synthetic world needs n_p >= 2 and n_h >= 1")
