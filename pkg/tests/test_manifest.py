import json
import numpy as np
import pytest
from config import Config
from models.fields import GriddedSeries
from models.manifest import load_manifest, parse_manifest, resolve_options
from models.storage import write_gridded_field, write_gridded_series
from services.grid_geometry import build_grid
from services.pipeline import (
    build_study_config, fit_options_from, gather_inputs, load_controls, load_historicals, load_observation,
    synthetic_inputs,
)
from utils.errors import InsufficientDataError, ManifestError
from tests.conftest import field

SYNTHETIC = {"n_controls": 2, "n_p": 6, "historical_members": [2, 3], "n_active": 4, "seed": 5}


@pytest.fixture
def grid():
    return build_grid(2, 4)


@pytest.fixture
def file_manifest(tmp_path, grid, rng):
    times = np.arange(60) + 1900.5
    write_gridded_series(tmp_path / "picontrol.txt",
                         GriddedSeries(grid, times, rng.standard_normal((60, grid.n_grid)), "control", "ModelA"))
    write_gridded_field(tmp_path / "extra.txt", field(grid, rng.standard_normal(grid.n_grid), "control"))
    for k in range(3):
        write_gridded_field(tmp_path / f"hist{k}.txt", field(grid, 1.0 + rng.standard_normal(grid.n_grid), "historical"))
    write_gridded_field(tmp_path / "obs.txt", field(grid, np.ones(grid.n_grid), "observation"))
    document = {
        "grid": {"n_lat": 2, "n_lon": 4},
        "datasets": [
            {"role": "control", "path": "picontrol.txt", "model_id": "ModelA", "kind": "series"},
            {"role": "control", "path": "extra.txt", "model_id": "ModelA"},
            {"role": "historical", "path": "hist0.txt", "model_id": "ModelH"},
            {"role": "historical", "path": "hist1.txt", "model_id": "ModelH"},
            {"role": "historical", "path": "hist2.txt", "model_id": "ModelJ"},
            {"role": "observation", "path": "obs.txt", "model_id": "HadCRUT"},
        ],
        "options": {"samples": 50, "burn_in": 10, "window_years": 25},
    }
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(document))
    return path


def test_synthetic_only_manifest_parses(tmp_path):
    manifest = parse_manifest({"grid": {"n_lat": 4, "n_lon": 8}, "synthetic": SYNTHETIC}, tmp_path)
    assert manifest.grid.to_grid() == build_grid(4, 8)
    assert manifest.synthetic.historical_members == [2, 3]
    manifest.require_roles("control", "historical", "observation")


@pytest.mark.parametrize("document, message", [
    ({"grid": {"n_lat": 4, "n_lon": 8}}, "datasets or a synthetic"),
    ({"grid": {"n_lat": 1, "n_lon": 8}, "synthetic": {}}, "n_lat"),
    ({"grid": {"n_lat": 4, "n_lon": 8}, "datasets": [{"role": "forcing", "path": "a.txt"}]}, "role"),
    ({"grid": {"n_lat": 4, "n_lon": 8}, "synthetic": {"historical_members": [1]}}, "at least 2 members"),
    ({"grid": {"n_lat": 4, "n_lon": 8}, "synthetic": {"variance_logsd": -1.0}}, "variance_logsd"),
    ({"grid": {"n_lat": 4, "n_lon": 8}, "synthetic": {}, "options": {"likelihood_kind": "t"}}, "likelihood_kind"),
])
def test_invalid_manifests(tmp_path, document, message):
    with pytest.raises(ManifestError, match=message):
        parse_manifest(document, tmp_path)


def test_missing_dataset_file(tmp_path):
    document = {"grid": {"n_lat": 2, "n_lon": 4}, "datasets": [{"role": "control", "path": "nope.txt"}]}
    with pytest.raises(ManifestError, match="does not exist"):
        parse_manifest(document, tmp_path)


def test_load_manifest_reports_unreadable_files(tmp_path):
    with pytest.raises(ManifestError, match="cannot read"):
        load_manifest(tmp_path / "absent.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ManifestError, match="not valid JSON"):
        load_manifest(broken)
    broken.write_text("[1, 2]")
    with pytest.raises(ManifestError, match="JSON object"):
        load_manifest(broken)


def test_option_precedence(tmp_path):
    manifest = parse_manifest(
        {"grid": {"n_lat": 4, "n_lon": 8}, "synthetic": {}, "options": {"samples": 10, "seed": 3}}, tmp_path)
    resolved = resolve_options(manifest.options, {"seed": 99, "burn_in": None})
    assert resolved["samples"] == 10
    assert resolved["seed"] == 99
    assert resolved["burn_in"] == Config.BURN_IN
    assert resolved["kernel"] == Config.KERNEL
    assert resolve_options()["samples"] == Config.SAMPLES
    options = fit_options_from(resolved)
    assert options.samples == 10 and options.burn_in == Config.BURN_IN


def test_file_inputs_are_grouped_by_model(file_manifest):
    manifest = load_manifest(file_manifest)
    resolved = resolve_options(manifest.options)
    controls = load_controls(manifest, resolved)
    assert [c.model_id for c in controls] == ["ModelA"]
    # two 25-year segments from the series plus one trend-field file
    assert controls[0].n_p == 3

    historicals = load_historicals(manifest, resolved)
    assert [(h.model_id, h.n_h) for h in historicals] == [("ModelH", 2), ("ModelJ", 1)]

    observation = load_observation(manifest, resolved)
    assert observation.role == "observation" and observation.model_id == "HadCRUT"
    assert np.array_equal(observation.values, np.ones(8))


def test_required_roles_need_a_dataset_each(file_manifest, tmp_path, grid):
    load_manifest(file_manifest).require_roles("control", "historical", "observation")
    write_gridded_field(tmp_path / "c.txt", field(grid, np.zeros(grid.n_grid), "control"))
    manifest = parse_manifest({"grid": {"n_lat": 2, "n_lon": 4},
                               "datasets": [{"role": "control", "path": "c.txt"}]}, tmp_path)
    manifest.require_roles("control")
    with pytest.raises(ManifestError, match="historical, observation"):
        manifest.require_roles("control", "historical", "observation")


def test_relative_paths_resolve_against_manifest_directory(file_manifest):
    manifest = load_manifest(file_manifest)
    assert manifest.resolve_path(manifest.datasets[0]) == file_manifest.parent / "picontrol.txt"


def test_study_needs_leave_one_out_members(file_manifest):
    manifest = load_manifest(file_manifest)
    with pytest.raises(InsufficientDataError):
        build_study_config(manifest, resolve_options(manifest.options))


def test_synthetic_inputs_are_seeded(tmp_path):
    manifest = parse_manifest({"grid": {"n_lat": 4, "n_lon": 8}, "synthetic": SYNTHETIC}, tmp_path)
    resolved = resolve_options(manifest.options)
    controls, historicals, observation = synthetic_inputs(manifest, resolved)
    assert [c.n_p for c in controls] == [6, 6]
    assert [h.n_h for h in historicals] == [2, 3]
    assert observation.role == "observation"
    again, _, _ = synthetic_inputs(manifest, resolved)
    assert np.array_equal(controls[1].matrix, again[1].matrix)
    assert not np.array_equal(controls[0].matrix, controls[1].matrix)


def test_variance_spread_only_perturbs_the_historical_members(tmp_path):
    def draw(spread):
        manifest = parse_manifest(
            {"grid": {"n_lat": 4, "n_lon": 8}, "synthetic": {**SYNTHETIC, "variance_logsd": spread}}, tmp_path)
        return synthetic_inputs(manifest, resolve_options(manifest.options))

    controls, historicals, _ = draw(0.0)
    spread_controls, spread_historicals, _ = draw(1.0)
    assert all(np.array_equal(a.matrix, b.matrix) for a, b in zip(controls, spread_controls))
    assert not np.allclose(historicals[0].matrix, spread_historicals[0].matrix)


def test_gather_and_study_from_synthetic_source(tmp_path):
    manifest = parse_manifest({"grid": {"n_lat": 4, "n_lon": 8}, "synthetic": SYNTHETIC}, tmp_path)
    resolved = resolve_options(manifest.options, {"seed": 17})
    controls, historicals, observation = gather_inputs(manifest, resolved)
    assert len(controls) == 2 and len(historicals) == 2 and observation is not None
    study = build_study_config(manifest, resolved)
    assert study.base_seed == 17
    assert study.credible_level == Config.CREDIBLE_LEVEL
