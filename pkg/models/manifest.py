"""Manifest schema: grid, dataset entries, synthetic sources and pipeline options"""
import json
import logging
from pathlib import Path
from typing import List, Literal, Optional
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from config import Config
from models.grid import Grid
from utils.errors import ManifestError

logger = logging.getLogger(__name__)

ROLES = ("control", "historical", "observation")


class GridSpec(BaseModel):
    """Regular latitude-longitude grid"""
    n_lat: int = Field(description="Number of latitude bands", ge=2)
    n_lon: int = Field(description="Number of longitude bands", ge=2)

    def to_grid(self):
        return Grid(self.n_lat, self.n_lon)


class DatasetEntry(BaseModel):
    """One gridded file and the role it plays"""
    role: Literal["control", "historical", "observation"] = Field(description="control | historical | observation")
    path: str = Field(description="File path, relative paths resolve against the manifest directory")
    model_id: str = Field(default="", description="Climate model (or product) the file belongs to")
    kind: Literal["field", "series"] = Field(default="field", description="Trend field or raw gridded series")


class SyntheticSource(BaseModel):
    """Known-truth world drawn in the Laplacian basis instead of files"""
    n_controls: int = Field(default=2, ge=1, description="Number of control models")
    n_p: int = Field(default=40, ge=2, description="Trend fields per control model")
    historical_members: List[int] = Field(default_factory=lambda: [3], description="Members per historical model")
    n_active: int = Field(default=8, ge=1, description="Components carrying variance in the true spectrum")
    exponent: float = Field(default=2.0, description="Power-law decay of the true spectrum")
    mismatch_sd: float = Field(default=0.0, ge=0.0, description="Log-sd of the per-model spectrum perturbation")
    variance_logsd: float = Field(default=0.0, ge=0.0,
                                  description="Log-sd of the historical noise variances around the true spectrum")
    forced_amplitude: float = Field(default=1.0, description="Scale of the forced pattern")
    seed: int = Field(default=0, description="Seed for the synthetic draws")

    @field_validator("historical_members")
    @classmethod
    def _members_allow_leave_one_out(cls, value):
        if not value or any(n < 2 for n in value):
            raise ValueError("every historical model needs at least 2 members")
        return value


class PipelineOptions(BaseModel):
    """Options left unset fall back to the environment configuration"""
    basis_kind: Optional[Literal["laplace", "eof"]] = Field(default=None, description="Covariance parameterization")
    likelihood_kind: Optional[Literal["chi2", "normal"]] = Field(default=None, description="Likelihood model for kappa")
    area_weighting: Optional[bool] = Field(default=None, description="Apply sqrt(cos lat) weights")
    kernel: Optional[Literal["half_angle", "as_printed"]] = Field(default=None, description="Laplacian kernel variant")
    samples: Optional[int] = Field(default=None, gt=0, description="Retained MCMC draws")
    burn_in: Optional[int] = Field(default=None, ge=0, description="Discarded MCMC draws")
    seed: Optional[int] = Field(default=None, description="Base seed")
    credible_level: Optional[float] = Field(default=None, gt=0.0, lt=1.0, description="Credible interval level")
    kappa_cap: Optional[int] = Field(default=None, ge=2, description="Largest kappa searched")
    df_convention: Optional[Literal["kappa_minus_one", "kappa"]] = Field(default=None, description="chi^2 degrees of freedom")
    prior_logvar_sd: Optional[float] = Field(default=None, ge=0.0, description="Prior sd of log lambda_i")
    max_iterations: Optional[int] = Field(default=None, ge=1, description="Two-fit iteration cap")
    window_years: Optional[int] = Field(default=None, ge=1, description="Control segment length")
    annual_mean: Optional[bool] = Field(default=None, description="Average to annual means before trends")


def default_options():
    return {
        "basis_kind": "laplace",
        "likelihood_kind": "chi2",
        "area_weighting": Config.AREA_WEIGHTING,
        "kernel": Config.KERNEL,
        "samples": Config.SAMPLES,
        "burn_in": Config.BURN_IN,
        "seed": Config.SEED,
        "credible_level": Config.CREDIBLE_LEVEL,
        "kappa_cap": Config.KAPPA_CAP,
        "df_convention": Config.CHI2_DF,
        "prior_logvar_sd": Config.PRIOR_LOGVAR_SD,
        "max_iterations": Config.MAX_ITERATIONS,
        "window_years": Config.WINDOW_YEARS,
        "annual_mean": False,
    }


def resolve_options(options=None, overrides=None):
    """Flag overrides beat manifest options, which beat the environment defaults"""
    resolved = default_options()
    if options is not None:
        resolved.update(options.model_dump(exclude_none=True))
    resolved.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return resolved


class Manifest(BaseModel):
    grid: GridSpec
    datasets: List[DatasetEntry] = Field(default_factory=list)
    synthetic: Optional[SyntheticSource] = None
    options: PipelineOptions = Field(default_factory=PipelineOptions)
    base_dir: str = Field(default=".", exclude=True)

    @model_validator(mode="after")
    def _has_sources(self):
        if not self.datasets and self.synthetic is None:
            raise ValueError("manifest needs datasets or a synthetic source")
        return self

    def resolve_path(self, entry):
        path = Path(entry.path)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def entries(self, role):
        return [entry for entry in self.datasets if entry.role == role]

    def require_roles(self, *roles):
        """Raise ManifestError when a role the command needs has no source; a synthetic world supplies all three"""
        if self.synthetic is not None:
            return
        missing = [r for r in roles if not self.entries(r)]
        if missing:
            raise ManifestError(f"manifest has no dataset with role(s) {', '.join(missing)}")

    def check_paths(self):
        for entry in self.datasets:
            if not self.resolve_path(entry).is_file():
                raise ManifestError(f"dataset {entry.path!r} ({entry.role}) does not exist")


def parse_manifest(document, base_dir="."):
    try:
        manifest = Manifest.model_validate({**document, "base_dir": str(base_dir)})
    except ValidationError as e:
        raise ManifestError(f"invalid manifest: {e}") from e
    manifest.check_paths()
    return manifest


def load_manifest(path):
    """Read, validate and path-check a JSON manifest"""
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except OSError as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ManifestError(f"manifest {path} is not valid JSON: {e}") from e
    if not isinstance(document, dict):
        raise ManifestError(f"manifest {path} must be a JSON object")
    manifest = parse_manifest(document, path.parent)
    logger.info(f"📋 Loaded manifest {path} with {len(manifest.datasets)} datasets")
    return manifest
