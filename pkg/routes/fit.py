"""Fit routes: closed-form GLS and the Bayesian two-fit on JSON-posted fields"""
import logging
from typing import List, Literal, Optional
import numpy as np
from flask import Blueprint, current_app, jsonify, request
from pydantic import BaseModel, Field, ValidationError
from models.fields import ControlEnsemble, FieldVector
from models.fitting import FitOptions
from models.grid import Grid
from services.covariance_model import area_weight_field
from services.gls_core import gls_fit
from services.validation_harness import fit_against_control, fit_summary, prepare_control
from utils.errors import FingerprintError

logger = logging.getLogger(__name__)

fit_bp = Blueprint('fit', __name__, url_prefix="/api")


class FieldsInput(BaseModel):
    """Observation, forced pattern and control trend fields on one grid"""
    n_lat: int = Field(ge=2, description="Number of latitude bands")
    n_lon: int = Field(ge=2, description="Number of longitude bands")
    observation: List[float] = Field(description="Observed trend field, longitude fastest")
    forced: List[float] = Field(description="Forced-response trend field")
    controls: List[List[float]] = Field(min_length=2, description="Control trend fields, one per row")
    control_id: str = Field(default="posted-control", description="Label for the control ensemble")
    basis_kind: Literal["laplace", "eof"] = Field(default="laplace", description="Covariance parameterization")
    area_weighting: Optional[bool] = Field(default=None, description="Apply sqrt(cos lat) weights")
    kernel: Optional[Literal["half_angle", "as_printed"]] = Field(default=None, description="Laplacian kernel")


class GlsInput(FieldsInput):
    kappa: int = Field(ge=2, description="Truncation number")
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0, description="Residual-consistency test level")


class FitInput(FieldsInput):
    likelihood_kind: Literal["chi2", "normal"] = Field(default="chi2", description="Likelihood model for kappa")
    samples: Optional[int] = Field(default=None, gt=0, description="Retained MCMC draws")
    burn_in: Optional[int] = Field(default=None, ge=0, description="Discarded MCMC draws")
    seed: Optional[int] = Field(default=None, description="Sampler seed")
    kappa_cap: Optional[int] = Field(default=None, ge=2, description="Largest kappa searched")
    credible_level: Optional[float] = Field(default=None, gt=0.0, lt=1.0, description="Credible interval level")


def _error(message, status):
    return jsonify({"status": "error", "error": message}), status


def _options(payload, **extra):
    config = current_app.config
    return FitOptions(
        basis_kind=payload.basis_kind,
        area_weighting=config["AREA_WEIGHTING"] if payload.area_weighting is None else payload.area_weighting,
        kernel=payload.kernel or config["KERNEL"],
        df_convention=config["CHI2_DF"],
        prior_logvar_sd=config["PRIOR_LOGVAR_SD"],
        max_iterations=config["MAX_ITERATIONS"],
        **extra,
    )


def _inputs(payload):
    grid = Grid(payload.n_lat, payload.n_lon)
    observation = FieldVector(grid, payload.observation, "observation")
    forced = FieldVector(grid, payload.forced, "forced")
    control = ControlEnsemble(payload.control_id, grid, np.asarray(payload.controls, dtype=float))
    return observation, forced, control


def _parse(schema):
    document = request.get_json(silent=True)
    if not isinstance(document, dict):
        return None, _error("request body must be a JSON object", 400)
    try:
        return schema.model_validate(document), None
    except ValidationError as e:
        return None, _error(e.errors(include_url=False, include_context=False), 422)


@fit_bp.route("/gls", methods=["POST"])
def gls_endpoint():
    """Closed-form GLS at a fixed truncation"""
    payload, failure = _parse(GlsInput)
    if failure:
        return failure
    try:
        options = _options(payload)
        y, x, control = _inputs(payload)
        basis, spectrum = prepare_control(control, options)
        if options.area_weighting:
            y, x = area_weight_field(y.grid, y), area_weight_field(x.grid, x)
        result = gls_fit(y, x, basis, spectrum, payload.kappa, payload.alpha, options.df_convention)
    except FingerprintError as e:
        logger.error(f"❌ GLS request failed: {e}")
        return _error(str(e), 400)
    return jsonify({
        "status": "ok",
        "beta": result.beta,
        "stderr": result.stderr,
        "kappa": result.kappa,
        "statistic": result.statistic,
        "p_value": result.p_value,
        "rejected": bool(result.rejected),
        "ci_low": result.interval[0],
        "ci_high": result.interval[1],
    }), 200


@fit_bp.route("/fit", methods=["POST"])
def fit_endpoint():
    """Bayesian two-fit with the kappa likelihood of choice"""
    payload, failure = _parse(FitInput)
    if failure:
        return failure
    config = current_app.config
    try:
        options = _options(
            payload,
            likelihood_kind=payload.likelihood_kind,
            samples=payload.samples or config["SAMPLES"],
            burn_in=config["BURN_IN"] if payload.burn_in is None else payload.burn_in,
            kappa_cap=payload.kappa_cap or config["KAPPA_CAP"],
        )
        y, x, control = _inputs(payload)
        basis, spectrum = prepare_control(control, options)
        seed = config["SEED"] if payload.seed is None else payload.seed
        result = fit_against_control(y, x, basis, spectrum, options, seed)
        summary = fit_summary(result, payload.credible_level or config["CREDIBLE_LEVEL"])
    except FingerprintError as e:
        logger.error(f"❌ Fit request failed: {e}")
        return _error(str(e), 400)
    logger.info(f"✅ Fit request served: kappa_post={summary['kappa_post']}")
    return jsonify({"status": "ok", **summary}), 200
