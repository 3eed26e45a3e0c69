"""Turns a manifest into ensembles, an observation and a StudyConfig"""
import logging
from collections import OrderedDict
import numpy as np
from models.fields import ControlEnsemble, FieldVector, ForcedEnsemble
from models.fitting import FitOptions
from models.storage import load_gridded_field, load_gridded_series
from models.study import StudyConfig, SyntheticWorldSpec
from services.laplacian_basis import get_laplacian_basis_service
from services.trend_fields import control_ensemble_from_series, trend_field
from services.validation_harness import (
    forced_pattern, generate_synthetic_world, mismatch_spectrum, power_law_spectrum,
)
from utils.errors import InsufficientDataError, ManifestError
from utils.helpers import derive_seed

logger = logging.getLogger(__name__)

FIT_OPTION_KEYS = (
    "basis_kind", "likelihood_kind", "samples", "burn_in", "kappa_cap", "df_convention",
    "prior_logvar_sd", "max_iterations", "area_weighting", "kernel",
)


def fit_options_from(resolved):
    return FitOptions(**{key: resolved[key] for key in FIT_OPTION_KEYS})


def _grouped(entries):
    groups = OrderedDict()
    for entry in entries:
        groups.setdefault(entry.model_id or entry.path, []).append(entry)
    return groups


def _trend_of(manifest, entry, grid, resolved):
    path = manifest.resolve_path(entry)
    if entry.kind == "series":
        return trend_field(load_gridded_series(path, grid), resolved["annual_mean"])
    return load_gridded_field(path, grid)


def load_controls(manifest, resolved):
    """One ControlEnsemble per control model; series files are segmented into windows first"""
    grid = manifest.grid.to_grid()
    controls = []
    for model_id, entries in _grouped(manifest.entries("control")).items():
        rows = []
        for entry in entries:
            path = manifest.resolve_path(entry)
            if entry.kind == "series":
                ensemble = control_ensemble_from_series(
                    load_gridded_series(path, grid), resolved["window_years"], resolved["annual_mean"])
                rows.append(ensemble.matrix)
            else:
                rows.append(load_gridded_field(path, grid).values[np.newaxis, :])
        controls.append(ControlEnsemble(model_id, grid, np.vstack(rows)))
    return controls


def load_historicals(manifest, resolved):
    """One ForcedEnsemble per historical model, one member per file"""
    grid = manifest.grid.to_grid()
    return [
        ForcedEnsemble.from_fields(model_id, [_trend_of(manifest, entry, grid, resolved) for entry in entries])
        for model_id, entries in _grouped(manifest.entries("historical")).items()
    ]


def load_observation(manifest, resolved):
    entries = manifest.entries("observation")
    if not entries:
        raise ManifestError("manifest has no observation dataset")
    if len(entries) > 1:
        logger.warning(f"⚠️ {len(entries)} observation datasets listed; using {entries[0].path}")
    return _as_observation(_trend_of(manifest, entries[0], manifest.grid.to_grid(), resolved), entries[0].model_id)


def _as_observation(field, model_id=""):
    return FieldVector(field.grid, field.values, "observation", model_id or field.model_id)


def synthetic_inputs(manifest, resolved):
    """Controls, historicals and an observation drawn from the manifest's synthetic world"""
    source = manifest.synthetic
    grid = manifest.grid.to_grid()
    basis = get_laplacian_basis_service().get_basis(grid, resolved["kernel"])
    truth = power_law_spectrum(basis.n_basis, min(source.n_active, basis.n_basis), source.exponent)
    forced = forced_pattern(basis, min(source.n_active, basis.n_basis), source.forced_amplitude)

    controls = []
    for c in range(source.n_controls):
        spectrum = truth
        if source.mismatch_sd > 0:
            spectrum = mismatch_spectrum(truth, source.mismatch_sd, seed=derive_seed(source.seed, 0, c))
        world = SyntheticWorldSpec(grid, spectrum, forced, source.n_p, 1, derive_seed(source.seed, 1, c),
                                   control_id=f"synthetic-control-{c}")
        controls.append(generate_synthetic_world(world, basis)[0])

    historicals = []
    for f, n_members in enumerate(source.historical_members):
        world = SyntheticWorldSpec(grid, truth, forced, 2, n_members, derive_seed(source.seed, 2, f),
                                   logvar_sd=source.variance_logsd,
                                   historical_id=f"synthetic-historical-{f}")
        historicals.append(generate_synthetic_world(world, basis)[1])

    world = SyntheticWorldSpec(grid, truth, forced, 2, 1, derive_seed(source.seed, 3, 0),
                               logvar_sd=source.variance_logsd)
    observation = _as_observation(generate_synthetic_world(world, basis)[1].member(0))
    return controls, historicals, observation


def gather_inputs(manifest, resolved):
    """File-backed ensembles plus any synthetic ones, and the observation if present"""
    controls = load_controls(manifest, resolved)
    historicals = load_historicals(manifest, resolved)
    observation = load_observation(manifest, resolved) if manifest.entries("observation") else None
    if manifest.synthetic is not None:
        synthetic_controls, synthetic_historicals, synthetic_observation = synthetic_inputs(manifest, resolved)
        controls.extend(synthetic_controls)
        historicals.extend(synthetic_historicals)
        observation = observation if observation is not None else synthetic_observation
    return controls, historicals, observation


def build_study_config(manifest, resolved):
    controls, historicals, _ = gather_inputs(manifest, resolved)
    if not controls or not historicals:
        raise InsufficientDataError("validation needs at least one control and one historical model")
    return StudyConfig(controls, historicals, fit_options_from(resolved),
                       base_seed=resolved["seed"], credible_level=resolved["credible_level"])
