"""
Known-truth validation: every historical member in turn plays the observation,
the mean of the remaining members plays the forced pattern, and the fitted
beta is scored against its true value of one. Also home to the synthetic
world generator and the detection and attribution statistics.
"""
import logging
import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.ndimage import gaussian_filter1d
from models.basis import BasisKind
from models.fields import ControlEnsemble, FieldVector, ForcedEnsemble
from models.study import FitRecord
from services.covariance_model import area_weight_field, area_weight_matrix, control_spectrum
from services.fingerprint_bayes import two_fit
from services.laplacian_basis import get_laplacian_basis_service
from utils.constants import (
    ATTRIBUTION_LEVEL, ATTRIBUTION_THRESHOLD, DETECTION_PROBABILITY_CUTOFF, DETECTION_THRESHOLD,
    TRUE_BETA, VALIDATION_DONE_MSG,
)
from utils.errors import DataError, FingerprintError, InsufficientDataError, ZeroVarianceError
from utils.helpers import derive_seed

logger = logging.getLogger(__name__)


def leave_one_out_mean(ensemble, k):
    """Mean of the forced ensemble with member k excluded"""
    n = ensemble.n_h
    if n < 2:
        raise InsufficientDataError(f"leave-one-out needs at least 2 members, {ensemble.model_id} has {n}")
    if not 0 <= k < n:
        raise DataError(f"member index {k} outside 0..{n - 1}")
    values = (ensemble.matrix.sum(axis=0) - ensemble.matrix[k]) / (n - 1)
    return FieldVector(ensemble.grid, values, "forced", ensemble.model_id)


# --- synthetic worlds ---

def power_law_spectrum(n_components, n_active, exponent=2.0, scale=1.0, floor=1e-6):
    """scale * i^-exponent on the first n_active components, a small floor after them"""
    if not 1 <= n_active <= n_components:
        raise DataError(f"n_active must lie in [1, {n_components}], got {n_active}")
    ranks = np.arange(1, n_components + 1, dtype=float)
    spectrum = scale * ranks ** -exponent
    spectrum[n_active:] = floor * spectrum[n_active - 1]
    return spectrum


def mismatch_spectrum(spectrum, sd=0.5, smoothing=2.0, seed=0):
    """Multiply a spectrum by smooth log-normal factors, emulating a different model's variability"""
    spectrum = np.asarray(spectrum, dtype=float)
    rng = np.random.default_rng(seed)
    log_factors = rng.normal(0.0, sd, spectrum.size)
    if smoothing > 0:
        log_factors = gaussian_filter1d(log_factors, smoothing, mode="nearest")
    return spectrum * np.exp(log_factors)


def forced_pattern(basis, n_active, amplitude=1.0):
    """Large-scale forced response: leading components with weights decaying as 1/i"""
    if not 1 <= n_active <= basis.n_basis:
        raise DataError(f"n_active must lie in [1, {basis.n_basis}], got {n_active}")
    weights = amplitude / np.arange(1, n_active + 1, dtype=float)
    return FieldVector(basis.grid, basis.leading(n_active) @ weights, "forced", "synthetic")


def generate_synthetic_world(spec, basis):
    """Control fields B(eps * sqrt(lambda)) and forced members around the true forced field"""
    basis.require_grid(spec.grid)
    if spec.true_spectrum.size != basis.n_basis:
        raise DataError(f"spectrum has {spec.true_spectrum.size} entries for {basis.n_basis} basis vectors")
    rng = np.random.default_rng(spec.seed)
    control_sd = np.sqrt(spec.true_spectrum)
    observed = spec.true_spectrum if spec.observed_spectrum is None else spec.observed_spectrum
    if spec.logvar_sd > 0:
        # separate stream: the control and member draws match the logvar_sd = 0 world
        spread = np.random.default_rng([spec.seed, 1]).standard_normal(basis.n_basis)
        observed = observed * np.exp(spec.logvar_sd * spread)
    controls = (rng.standard_normal((spec.n_p, basis.n_basis)) * control_sd) @ basis.vectors.T
    noise = (rng.standard_normal((spec.n_h, basis.n_basis)) * np.sqrt(observed)) @ basis.vectors.T
    members = spec.true_forced_field.values[np.newaxis, :] + noise
    return (ControlEnsemble(spec.control_id, spec.grid, controls),
            ForcedEnsemble(spec.historical_id, spec.grid, members))


# --- fitting against one control model ---

def prepare_control(control, options, laplacian_basis=None):
    """Basis and variance spectrum of one (optionally area-weighted) control ensemble"""
    if options.area_weighting:
        control = ControlEnsemble(control.model_id, control.grid, area_weight_matrix(control.grid, control.matrix))
    if options.basis_kind == BasisKind.LAPLACIAN and laplacian_basis is None:
        laplacian_basis = get_laplacian_basis_service().get_basis(control.grid, options.kernel)
    return control_spectrum(control, options.basis_kind, laplacian_basis)


def fit_against_control(y, x, basis, spectrum, options, seed):
    """two_fit with the study options; y and x are area-weighted when the control was"""
    if options.area_weighting:
        y = area_weight_field(basis.grid, y)
        x = area_weight_field(basis.grid, x)
    return two_fit(
        y, x, basis, spectrum, options.likelihood_kind, options.samples, options.burn_in, seed,
        kappa_cap=options.kappa_cap, df_convention=options.df_convention,
        prior_logvar_sd=options.prior_logvar_sd, max_iterations=options.max_iterations,
    )


# --- the sweep ---

def enumerate_tuples(n_controls, members_per_historical):
    """Every (c, f, k) the sweep fits"""
    return [(c, f, k)
            for c in range(n_controls)
            for f, n_members in enumerate(members_per_historical)
            for k in range(n_members)]


def crps(samples, truth):
    """Empirical-ensemble CRPS: mean |s - truth| minus half the mean pairwise |s_j - s_k|"""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    m = s.size
    if m == 0:
        raise DataError("CRPS needs at least one sample")
    # sum over all ordered pairs of |s_j - s_k| from the sorted values
    pairwise = 2.0 * float(np.sum((2.0 * np.arange(m) - m + 1.0) * s))
    return float(np.mean(np.abs(s - truth))) - pairwise / (2.0 * m * m)


def _fit_pair(c, f, control, historical, basis, spectrum, options, base_seed, credible_level):
    records = []
    for k in range(historical.n_h):
        try:
            fit = fit_against_control(historical.member(k), leave_one_out_mean(historical, k),
                                      basis, spectrum, options, derive_seed(base_seed, c, f, k))
            low, high = fit.credible_interval(credible_level)
            score = crps(fit.samples.beta, TRUE_BETA)
        except (FingerprintError, np.linalg.LinAlgError) as e:
            logger.error(f"❌ Fit failed for tuple ({c}, {f}, {k}): {e}")
            records.append(FitRecord(c, f, k, control.model_id, historical.model_id, status="failed", error=str(e)))
            continue
        records.append(FitRecord(
            c, f, k, control.model_id, historical.model_id,
            beta_mean=fit.beta_post_mean, beta_sd=fit.beta_post_sd, ci_low=low, ci_high=high,
            contains_one=bool(low <= TRUE_BETA <= high), crps=score,
            kappa_post=fit.kappa_post, converged=fit.converged,
        ))
    return records


def run_validation(config, threads=1, laplacian_basis=None):
    """Fit every (control, historical, member) tuple; failures are recorded, never raised"""
    options = config.options
    prepared = []
    for c, control in enumerate(config.controls):
        try:
            prepared.append(prepare_control(control, options, laplacian_basis))
        except FingerprintError as e:
            logger.error(f"❌ Control {control.model_id} unusable: {e}")
            prepared.append(e)

    jobs, failures = [], []
    for c, control in enumerate(config.controls):
        for f, historical in enumerate(config.historicals):
            if isinstance(prepared[c], Exception):
                failures.extend(
                    FitRecord(c, f, k, control.model_id, historical.model_id, status="failed", error=str(prepared[c]))
                    for k in range(historical.n_h))
                continue
            basis, spectrum = prepared[c]
            jobs.append(delayed(_fit_pair)(c, f, control, historical, basis, spectrum, options,
                                           config.base_seed, config.credible_level))

    batches = Parallel(n_jobs=max(1, int(threads)))(jobs) if jobs else []
    records = sorted([r for batch in batches for r in batch] + failures, key=lambda r: (r.c, r.f, r.k))
    n_failed = sum(not r.ok for r in records)
    logger.info(VALIDATION_DONE_MSG.format(n_ok=len(records) - n_failed, n_failed=n_failed))
    return records


# --- metrics ---

def _successful(records):
    records = [r for r in records if r.ok]
    if not records:
        raise DataError("no successful fit records to aggregate")
    return records


def coverage_rate(records):
    """Fraction of credible intervals containing the true beta"""
    records = _successful(records)
    return sum(r.contains_one for r in records) / len(records)


def rmse(records, truth=TRUE_BETA):
    records = _successful(records)
    means = np.array([r.beta_mean for r in records])
    return float(np.sqrt(np.mean((means - truth) ** 2)))


def aggregate_metrics(records):
    """Coverage, RMSE and mean CRPS per (control, historical) pair"""
    frame = pd.DataFrame([r.as_row() for r in records])
    rows = []
    for (c, f), group in frame.groupby(["c", "f"], sort=True):
        pair = [r for r in records if r.c == c and r.f == f]
        ok = [r for r in pair if r.ok]
        rows.append({
            "c": int(c),
            "f": int(f),
            "control_id": group["control_id"].iloc[0],
            "historical_id": group["historical_id"].iloc[0],
            "n_fits": len(pair),
            "n_failed": len(pair) - len(ok),
            "coverage": coverage_rate(ok) if ok else np.nan,
            "rmse": rmse(ok) if ok else np.nan,
            "mean_crps": float(np.mean([r.crps for r in ok])) if ok else np.nan,
            "median_kappa_post": float(np.median([r.kappa_post for r in ok])) if ok else np.nan,
        })
    return pd.DataFrame(rows)


def summarize_by_control(aggregates):
    """Median plus 5-95% and interquartile ranges of each metric across historical models"""
    rows = []
    for c, group in aggregates.groupby("c", sort=True):
        row = {"c": int(c), "control_id": group["control_id"].iloc[0], "n_historical": len(group)}
        for metric in ("coverage", "rmse", "mean_crps"):
            values = group[metric].dropna().to_numpy()
            if values.size == 0:
                quantiles = [np.nan] * 5
            else:
                quantiles = np.quantile(values, [0.05, 0.25, 0.5, 0.75, 0.95], method="linear")
            for name, value in zip(("q05", "q25", "median", "q75", "q95"), quantiles):
                row[f"{metric}_{name}"] = float(value)
        rows.append(row)
    return pd.DataFrame(rows)


# --- detection and attribution ---

def _posterior_sd(fit):
    if not fit.beta_post_sd > 0:
        raise ZeroVarianceError("posterior standard deviation of beta is zero")
    return fit.beta_post_sd


def detection_statistic(fit):
    """Posterior mean of beta in posterior standard deviations from zero"""
    return fit.beta_post_mean / _posterior_sd(fit)


def attribution_statistic(fit):
    """|1 - posterior mean| in posterior standard deviations"""
    return abs(TRUE_BETA - fit.beta_post_mean) / _posterior_sd(fit)


def is_detected(fit):
    return detection_statistic(fit) >= DETECTION_THRESHOLD and fit.detection_probability < DETECTION_PROBABILITY_CUTOFF


def is_attributed(fit, level=ATTRIBUTION_LEVEL):
    low, high = fit.credible_interval(level)
    return bool(low <= TRUE_BETA <= high)


def attribution_consistent(fit):
    """Statistic at or below the two-sided 5% threshold: beta = 1 not rejected"""
    return attribution_statistic(fit) <= ATTRIBUTION_THRESHOLD


def summarize_detection_attribution(fits):
    """Counts of detected and attributed fits plus the mean statistics"""
    fits = list(fits)
    if not fits:
        raise DataError("no fits to summarize")
    detection = [detection_statistic(fit) for fit in fits]
    attribution = [attribution_statistic(fit) for fit in fits]
    n_detected = sum(is_detected(fit) for fit in fits)
    n_attributed = sum(is_attributed(fit) for fit in fits)
    return {
        "n_fits": len(fits),
        "n_detected": n_detected,
        "detected_pct": 100.0 * n_detected / len(fits),
        "n_attributed": n_attributed,
        "attributed_pct": 100.0 * n_attributed / len(fits),
        "mean_detection_statistic": float(np.mean(detection)),
        "mean_attribution_statistic": float(np.mean(attribution)),
    }


def fit_summary(fit, credible_level):
    """Posterior summary plus detection and attribution statistics of one fit"""
    low, high = fit.credible_interval(credible_level)
    attribution_low, attribution_high = fit.credible_interval(ATTRIBUTION_LEVEL)
    return {
        "beta_post_mean": fit.beta_post_mean,
        "beta_post_sd": fit.beta_post_sd,
        "kappa_post": fit.kappa_post,
        "converged": fit.converged,
        "n_iterations": fit.n_iterations,
        "kappa_history": list(fit.kappa_history),
        "credible_level": credible_level,
        "ci_low": low,
        "ci_high": high,
        "ci95_low": attribution_low,
        "ci95_high": attribution_high,
        "prob_beta_nonpositive": fit.detection_probability,
        "detection_statistic": detection_statistic(fit),
        "attribution_statistic": attribution_statistic(fit),
        "detected": is_detected(fit),
        "attributed": is_attributed(fit),
        "attribution_consistent": attribution_consistent(fit),
    }
