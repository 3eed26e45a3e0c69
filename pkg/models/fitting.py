"""Types flowing through the closed-form and Bayesian regression fits"""
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, List, Tuple
import numpy as np
from models.basis import BasisKind
from utils.constants import (
    DEFAULT_BURN_IN, DEFAULT_KAPPA_CAP, DEFAULT_MAX_ITERATIONS, DEFAULT_SAMPLES, DF_CONVENTIONS,
    DF_KAPPA_MINUS_ONE, KERNEL_HALF_ANGLE, KERNEL_VARIANTS, MIN_KAPPA,
)
from utils.errors import DataError, ZeroVarianceError
from utils.helpers import equal_tailed_interval


class LikelihoodKind(str, Enum):
    CHI_SQUARED = "chi2"
    NORMAL = "normal"


@dataclass(frozen=True, eq=False)
class ProjectedRegressionData:
    """Projected observations y*, forced pattern x* and variances for the first kappa components"""
    x_star: np.ndarray
    y_star: np.ndarray
    lambdas: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_star, dtype=float)
        y = np.asarray(self.y_star, dtype=float)
        lam = np.asarray(self.lambdas, dtype=float)
        if not (x.shape == y.shape == lam.shape) or x.ndim != 1:
            raise DataError(f"projected lengths differ: x*={x.shape}, y*={y.shape}, lambda={lam.shape}")
        if np.any(lam <= 0):
            bad = int(np.argmax(lam <= 0))
            raise ZeroVarianceError(f"component {bad + 1} has non-positive variance {lam[bad]!r}")
        object.__setattr__(self, "x_star", x)
        object.__setattr__(self, "y_star", y)
        object.__setattr__(self, "lambdas", lam)

    @property
    def kappa(self):
        return self.x_star.size


@dataclass(frozen=True, eq=False)
class Theta:
    """Parameter vector (beta, lambda_1..lambda_kappa)"""
    beta: float
    lambdas: np.ndarray

    @property
    def kappa(self):
        return len(self.lambdas)


@dataclass(frozen=True, eq=False)
class RegressionModelSpec:
    """Full-length projections plus the truncation the regression model is conditioned on"""
    y_star_full: np.ndarray
    x_star_full: np.ndarray
    lambda_hat: np.ndarray
    kappa: int
    prior_logvar_sd: float = 1.0

    def __post_init__(self):
        y = np.asarray(self.y_star_full, dtype=float)
        x = np.asarray(self.x_star_full, dtype=float)
        lam = np.asarray(self.lambda_hat, dtype=float)
        if not (y.shape == x.shape == lam.shape):
            raise DataError("y*, x* and lambda-hat must have equal length")
        if not MIN_KAPPA <= self.kappa <= y.size:
            raise DataError(f"kappa must lie in [{MIN_KAPPA}, {y.size}], got {self.kappa}")
        if self.prior_logvar_sd < 0:
            raise DataError("prior_logvar_sd must be non-negative")
        object.__setattr__(self, "y_star_full", y)
        object.__setattr__(self, "x_star_full", x)
        object.__setattr__(self, "lambda_hat", lam)

    @property
    def n_basis(self):
        return self.y_star_full.size

    @property
    def fixed_lambda(self):
        return self.prior_logvar_sd == 0

    def truncated(self, lambdas=None):
        lam = self.lambda_hat[:self.kappa] if lambdas is None else lambdas
        return ProjectedRegressionData(self.x_star_full[:self.kappa], self.y_star_full[:self.kappa], lam)


@dataclass(frozen=True, eq=False)
class FullProjection:
    """y*, x* and lambda-hat over the first n_eval basis components"""
    y_star: np.ndarray
    x_star: np.ndarray
    lambda_hat: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y_star, dtype=float)
        x = np.asarray(self.x_star, dtype=float)
        lam = np.asarray(self.lambda_hat, dtype=float)
        if not (y.shape == x.shape == lam.shape) or y.ndim != 1:
            raise DataError("y*, x* and lambda-hat must be one-dimensional with equal length")
        object.__setattr__(self, "y_star", y)
        object.__setattr__(self, "x_star", x)
        object.__setattr__(self, "lambda_hat", lam)

    @property
    def n_eval(self):
        return self.y_star.size

    def model_spec(self, kappa, prior_logvar_sd=1.0):
        return RegressionModelSpec(self.y_star, self.x_star, self.lambda_hat, kappa, prior_logvar_sd)


@dataclass(frozen=True)
class FitOptions:
    """Knobs shared by every two-fit run"""
    basis_kind: BasisKind = BasisKind.LAPLACIAN
    likelihood_kind: LikelihoodKind = LikelihoodKind.CHI_SQUARED
    samples: int = DEFAULT_SAMPLES
    burn_in: int = DEFAULT_BURN_IN
    kappa_cap: int = DEFAULT_KAPPA_CAP
    df_convention: str = DF_KAPPA_MINUS_ONE
    prior_logvar_sd: float = 1.0
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    area_weighting: bool = True
    kernel: str = KERNEL_HALF_ANGLE

    def __post_init__(self):
        object.__setattr__(self, "basis_kind", BasisKind(self.basis_kind))
        object.__setattr__(self, "likelihood_kind", LikelihoodKind(self.likelihood_kind))
        if self.samples <= 0 or self.burn_in < 0:
            raise DataError("samples must be positive and burn_in non-negative")
        if self.kappa_cap < MIN_KAPPA:
            raise DataError(f"kappa_cap must be at least {MIN_KAPPA}")
        if self.df_convention not in DF_CONVENTIONS:
            raise DataError(f"unknown df convention {self.df_convention!r}")
        if self.kernel not in KERNEL_VARIANTS:
            raise DataError(f"unknown kernel variant {self.kernel!r}")

    def as_dict(self):
        values = asdict(self)
        values["likelihood_kind"] = self.likelihood_kind.value
        values["basis_kind"] = self.basis_kind.value
        return values


@dataclass(frozen=True, eq=False)
class PosteriorSamples:
    beta: np.ndarray
    lambdas: np.ndarray
    kappa: int
    burn_in: int
    seed: int
    acceptance_rates: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def m(self):
        return self.beta.size

    def credible_interval(self, level):
        return equal_tailed_interval(self.beta, level)


@dataclass(frozen=True, eq=False)
class KappaPosterior:
    support: np.ndarray
    log_weights: np.ndarray
    likelihood_kind: LikelihoodKind

    @property
    def probabilities(self):
        return np.exp(self.log_weights)

    @property
    def map_kappa(self):
        # argmax returns the first maximiser, i.e. the smallest kappa on ties
        return int(self.support[int(np.argmax(self.log_weights))])

    def probability(self, kappa):
        hits = np.nonzero(self.support == kappa)[0]
        return float(np.exp(self.log_weights[hits[0]])) if hits.size else 0.0


@dataclass(frozen=True, eq=False)
class FitResult:
    kappa_posterior: KappaPosterior
    kappa_post: int
    samples: PosteriorSamples
    beta_post_mean: float
    beta_post_sd: float
    n_iterations: int
    converged: bool
    kappa_history: List[int] = field(default_factory=list)

    def credible_interval(self, level):
        return self.samples.credible_interval(level)

    @property
    def detection_probability(self):
        """Posterior probability that beta <= 0"""
        return float(np.mean(self.samples.beta <= 0.0))


@dataclass(frozen=True)
class GlsResult:
    beta: float
    stderr: float
    kappa: int
    statistic: float
    p_value: float
    rejected: bool
    interval: Tuple[float, float]
