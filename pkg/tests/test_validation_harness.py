import numpy as np
import pandas as pd
import pytest
from models.fields import ControlEnsemble, ForcedEnsemble
from models.fitting import FitOptions
from models.study import FitRecord, StudyConfig, SyntheticWorldSpec
from services.grid_geometry import build_grid
from services.laplacian_basis import compute_laplacian_basis
from services.validation_harness import (
    aggregate_metrics, attribution_consistent, attribution_statistic, coverage_rate, crps, fit_against_control,
    detection_statistic, enumerate_tuples, fit_summary, forced_pattern, generate_synthetic_world,
    is_attributed, is_detected, leave_one_out_mean, mismatch_spectrum, power_law_spectrum, rmse,
    prepare_control, run_validation, summarize_by_control, summarize_detection_attribution,
)
from utils.constants import CMIP6_CONTROL_COUNTS, CMIP6_HISTORICAL_COUNTS
from utils.errors import DataError, InsufficientDataError, ZeroVarianceError
from utils.helpers import equal_tailed_interval

QUICK = FitOptions(samples=150, burn_in=100, kappa_cap=30, area_weighting=False)


class FakeFit:
    """Stands in for a FitResult with a Gaussian cloud of beta draws"""
    def __init__(self, mean, sd, draws=None):
        self.beta_post_mean = mean
        self.beta_post_sd = sd
        self.draws = np.asarray(draws if draws is not None else [mean - 3 * sd, mean, mean + 3 * sd])

    @property
    def detection_probability(self):
        return float(np.mean(self.draws <= 0.0))

    def credible_interval(self, level):
        return equal_tailed_interval(self.draws, level)


def record(beta_mean, c=0, f=0, k=0, contains_one=True, crps_value=0.1, kappa=3, status="ok"):
    return FitRecord(c, f, k, f"control-{c}", f"historical-{f}", beta_mean=beta_mean, contains_one=contains_one,
                     crps=crps_value, kappa_post=kappa, status=status)


@pytest.fixture
def study(small_grid, small_basis):
    spectrum = power_law_spectrum(small_basis.n_basis, 6, exponent=1.5)
    forced = forced_pattern(small_basis, 6, amplitude=2.0)
    controls = [
        generate_synthetic_world(SyntheticWorldSpec(small_grid, spectrum, forced, 30, 1, seed,
                                                    control_id=f"control-{seed}"), small_basis)[0]
        for seed in (1, 2)
    ]
    historical = generate_synthetic_world(
        SyntheticWorldSpec(small_grid, spectrum, forced, 2, 3, 99, historical_id="historical-a"), small_basis)[1]
    return StudyConfig(controls, [historical], QUICK, base_seed=42, credible_level=0.9)


def test_leave_one_out_of_two_members_is_the_other(small_grid, rng):
    v, w = rng.standard_normal((2, small_grid.n_grid))
    ensemble = ForcedEnsemble("pair", small_grid, np.vstack([v, w]))
    assert np.allclose(leave_one_out_mean(ensemble, 0).values, w)
    assert np.allclose(leave_one_out_mean(ensemble, 1).values, v)


def test_leave_one_out_mean_of_three(small_grid, rng):
    members = rng.standard_normal((3, small_grid.n_grid))
    ensemble = ForcedEnsemble("three", small_grid, members)
    assert np.allclose(leave_one_out_mean(ensemble, 1).values, (members[0] + members[2]) / 2)
    with pytest.raises(DataError):
        leave_one_out_mean(ensemble, 3)
    with pytest.raises(InsufficientDataError):
        leave_one_out_mean(ForcedEnsemble("one", small_grid, members[:1]), 0)


def test_power_law_spectrum_has_floor_after_active_components():
    spectrum = power_law_spectrum(10, 4, exponent=2.0)
    assert np.allclose(spectrum[:4], [1.0, 0.25, 1 / 9, 1 / 16])
    assert np.allclose(spectrum[4:], 1e-6 / 16)
    with pytest.raises(DataError):
        power_law_spectrum(10, 11)


def test_mismatch_spectrum_is_seeded_and_positive():
    spectrum = power_law_spectrum(20, 10)
    assert np.allclose(mismatch_spectrum(spectrum, sd=0.0), spectrum)
    first = mismatch_spectrum(spectrum, sd=0.5, seed=3)
    assert np.array_equal(first, mismatch_spectrum(spectrum, sd=0.5, seed=3))
    assert not np.allclose(first, spectrum)
    assert np.all(first > 0)


def test_forced_pattern_weights(small_basis):
    pattern = forced_pattern(small_basis, 3, amplitude=2.0)
    assert np.allclose(small_basis.vectors.T[:4] @ pattern.values, [2.0, 1.0, 2 / 3, 0.0], atol=1e-12)


def test_synthetic_world_shapes_and_determinism(small_grid, small_basis):
    spec = SyntheticWorldSpec(small_grid, power_law_spectrum(small_basis.n_basis, 5),
                              forced_pattern(small_basis, 5), n_p=12, n_h=4, seed=8)
    control, historical = generate_synthetic_world(spec, small_basis)
    assert control.n_p == 12 and historical.n_h == 4
    again, _ = generate_synthetic_world(spec, small_basis)
    assert np.array_equal(control.matrix, again.matrix)


def test_variance_spread_redraws_member_noise_only(small_grid, small_basis):
    spectrum = power_law_spectrum(small_basis.n_basis, 5)
    forced = forced_pattern(small_basis, 5)
    plain = generate_synthetic_world(SyntheticWorldSpec(small_grid, spectrum, forced, 12, 40, 8), small_basis)
    spread = generate_synthetic_world(
        SyntheticWorldSpec(small_grid, spectrum, forced, 12, 40, 8, logvar_sd=1.0), small_basis)
    assert np.array_equal(plain[0].matrix, spread[0].matrix)
    ratios = (np.var(spread[1].matrix @ small_basis.vectors, axis=0)
              / np.var(plain[1].matrix @ small_basis.vectors, axis=0))[:5]
    # same unit draws, so each ratio is exp(logvar_sd * z) for one z per component
    draws = np.random.default_rng([8, 1]).standard_normal(small_basis.n_basis)[:5]
    assert np.allclose(ratios, np.exp(draws))
    assert not np.allclose(ratios, 1.0)
    with pytest.raises(DataError):
        SyntheticWorldSpec(small_grid, spectrum, forced, 12, 40, 8, logvar_sd=-0.5)


def test_tuple_count_at_cmip6_scale():
    tuples = enumerate_tuples(len(CMIP6_CONTROL_COUNTS), list(CMIP6_HISTORICAL_COUNTS.values()))
    assert len(tuples) == 16 * 266 == 4256
    assert len(set(tuples)) == len(tuples)
    assert tuples[0] == (0, 0, 0)


def test_crps_examples(rng):
    assert crps([0.0, 2.0], 1.0) == pytest.approx(0.5)
    assert crps([3.0], 1.0) == pytest.approx(2.0)
    samples = rng.standard_normal(50)
    brute = np.mean(np.abs(samples - 0.3)) - 0.5 * np.mean(np.abs(samples[:, None] - samples[None, :]))
    assert crps(samples, 0.3) == pytest.approx(brute)
    with pytest.raises(DataError):
        crps([], 1.0)


def test_rmse_and_coverage_use_successful_records():
    records = [record(0.9), record(1.1, k=1, contains_one=False), record(5.0, k=2, status="failed")]
    assert rmse(records) == pytest.approx(0.1)
    assert coverage_rate(records) == pytest.approx(0.5)
    with pytest.raises(DataError):
        rmse([record(1.0, status="failed")])


def test_aggregates_and_control_summaries():
    records = [
        record(0.9, c=0, f=0), record(1.1, c=0, f=0, k=1),
        record(1.2, c=0, f=1, contains_one=False), record(1.0, c=0, f=1, k=1, status="failed"),
        record(1.0, c=1, f=0), record(1.0, c=1, f=0, k=1, status="failed"),
    ]
    aggregates = aggregate_metrics(records)
    assert list(aggregates[["c", "f"]].itertuples(index=False, name=None)) == [(0, 0), (0, 1), (1, 0)]
    first = aggregates.iloc[0]
    assert first["n_fits"] == 2 and first["n_failed"] == 0
    assert first["rmse"] == pytest.approx(0.1)
    assert first["coverage"] == 1.0
    assert aggregates.iloc[1]["n_failed"] == 1
    assert aggregates.iloc[1]["coverage"] == 0.0

    summary = summarize_by_control(aggregates)
    assert list(summary["c"]) == [0, 1]
    assert summary.iloc[0]["n_historical"] == 2
    assert summary.iloc[0]["coverage_median"] == pytest.approx(0.5)
    assert {"rmse_q05", "rmse_q95", "mean_crps_q25", "mean_crps_q75"} <= set(summary.columns)


def test_detection_and_attribution_thresholds():
    at_threshold = FakeFit(3.28, 2.0, draws=np.linspace(0.5, 6.0, 101))
    assert detection_statistic(at_threshold) == pytest.approx(1.64)
    assert is_detected(at_threshold)
    assert not is_detected(FakeFit(3.0, 2.0, draws=np.linspace(0.5, 6.0, 101)))
    assert not is_detected(FakeFit(3.28, 2.0, draws=np.linspace(-1.0, 6.0, 101)))

    assert attribution_statistic(FakeFit(0.02, 0.5)) == pytest.approx(1.96)
    assert attribution_consistent(FakeFit(0.1, 0.5))
    assert not attribution_consistent(FakeFit(-0.1, 0.5))
    with pytest.raises(ZeroVarianceError):
        detection_statistic(FakeFit(1.0, 0.0))


def test_attribution_uses_95_percent_interval():
    assert is_attributed(FakeFit(1.0, 0.1, draws=np.linspace(0.8, 1.2, 201)))
    assert not is_attributed(FakeFit(2.0, 0.1, draws=np.linspace(1.8, 2.2, 201)))


def test_detection_attribution_summary():
    fits = [FakeFit(1.0, 0.2, draws=np.linspace(0.6, 1.4, 51)), FakeFit(0.1, 0.2, draws=np.linspace(-0.3, 0.5, 51))]
    summary = summarize_detection_attribution(fits)
    assert summary["n_fits"] == 2
    assert summary["n_detected"] == 1 and summary["detected_pct"] == 50.0
    assert summary["n_attributed"] == 1
    assert summary["mean_detection_statistic"] == pytest.approx((5.0 + 0.5) / 2)
    with pytest.raises(DataError):
        summarize_detection_attribution([])


def test_run_validation_fits_every_tuple(study):
    records = run_validation(study)
    assert [(r.c, r.f, r.k) for r in records] == enumerate_tuples(2, [3])
    assert all(r.ok for r in records)
    for r in records:
        assert r.ci_low <= r.beta_mean <= r.ci_high
        assert r.kappa_post >= 2
        assert r.crps >= 0
    assert r.control_id == "control-2" and r.historical_id == "historical-a"


def test_run_validation_does_not_depend_on_thread_count(study):
    serial = run_validation(study, threads=1)
    parallel = run_validation(study, threads=2)
    assert [(r.c, r.f, r.k, r.kappa_post) for r in serial] == [(r.c, r.f, r.k, r.kappa_post) for r in parallel]
    assert [r.beta_mean for r in parallel] == pytest.approx([r.beta_mean for r in serial], rel=1e-9)
    assert [r.crps for r in parallel] == pytest.approx([r.crps for r in serial], rel=1e-9)


def test_failures_are_recorded_not_raised(study, small_grid):
    flat = ControlEnsemble("flat", small_grid, np.ones((5, small_grid.n_grid)))
    config = StudyConfig([flat, study.controls[0]], study.historicals, QUICK, base_seed=1)
    records = run_validation(config)
    assert len(records) == 6
    assert [r.ok for r in records] == [False] * 3 + [True] * 3
    assert "variance" in records[0].error

    eof = FitOptions(samples=50, burn_in=10, kappa_cap=10, area_weighting=False, basis_kind="eof")
    records = run_validation(StudyConfig([flat], study.historicals, eof))
    assert len(records) == 3 and not any(r.ok for r in records)


def test_failed_scoring_leaves_no_partial_results(study, monkeypatch):
    def broken_crps(samples, truth):
        raise DataError("CRPS needs at least one sample")

    monkeypatch.setattr("services.validation_harness.crps", broken_crps)
    records = run_validation(study, threads=1)
    assert len(records) == 6
    for r in records:
        assert r.status == "failed" and "CRPS" in r.error
        assert np.isnan(r.beta_mean) and np.isnan(r.beta_sd)
        assert np.isnan(r.ci_low) and np.isnan(r.ci_high)
        assert not r.contains_one and r.kappa_post == 0
    aggregates = aggregate_metrics(records)
    assert aggregates["n_failed"].tolist() == [3, 3]
    assert aggregates["coverage"].isna().all()
    with pytest.raises(DataError):
        coverage_rate(records)


def test_fit_summary_of_a_real_fit(study, small_basis):
    basis, spectrum = prepare_control(study.controls[0], QUICK)
    historical = study.historicals[0]
    fit = fit_against_control(historical.member(0), leave_one_out_mean(historical, 0), basis, spectrum, QUICK, 3)
    summary = fit_summary(fit, 0.9)
    assert summary["ci_low"] <= summary["beta_post_mean"] <= summary["ci_high"]
    assert summary["ci95_low"] <= summary["ci_low"]
    assert summary["kappa_post"] == fit.kappa_post
    assert isinstance(summary["detected"], (bool, np.bool_))
    assert pd.notna(summary["detection_statistic"])


def test_study_needs_two_members_per_historical(study, small_grid):
    one = ForcedEnsemble("one", small_grid, np.zeros((1, small_grid.n_grid)))
    with pytest.raises(InsufficientDataError):
        StudyConfig(study.controls, [one])


@pytest.fixture(scope="module")
def medium_basis():
    return compute_laplacian_basis(build_grid(18, 36))


@pytest.fixture(scope="module")
def coarse_basis():
    return compute_laplacian_basis(build_grid(9, 18))


def mismatched_pair(basis, seed, n_p, n_h=10):
    """Control drawn from a perturbed spectrum, historical members from the true one"""
    truth = power_law_spectrum(basis.n_basis, 40, exponent=1.5)
    forced = forced_pattern(basis, 8, amplitude=2.0)
    control_spectrum = mismatch_spectrum(truth, seed=seed)
    control = generate_synthetic_world(
        SyntheticWorldSpec(basis.grid, control_spectrum, forced, n_p, 1, seed, control_id=f"control-{seed}"), basis)[0]
    historical = generate_synthetic_world(
        SyntheticWorldSpec(basis.grid, truth, forced, 2, n_h, seed + 1000, historical_id=f"historical-{seed}"),
        basis)[1]
    return control, historical


def seeded_metrics(basis, options, n_p, seeds=range(20)):
    """Coverage, RMSE and median kappa_post per seed"""
    metrics = []
    for seed in seeds:
        control, historical = mismatched_pair(basis, seed, n_p)
        records = run_validation(StudyConfig([control], [historical], options, base_seed=seed, credible_level=0.9),
                                 threads=2, laplacian_basis=basis)
        ok = [r for r in records if r.ok]
        assert len(ok) >= 8
        metrics.append((coverage_rate(ok), rmse(ok), np.median([r.kappa_post for r in ok])))
    return np.array(metrics)


@pytest.mark.slow
def test_coverage_is_nominal_when_data_follow_the_fitted_model(medium_basis):
    grid = medium_basis.grid
    spectrum = power_law_spectrum(medium_basis.n_basis, 40, exponent=1.5)
    forced = forced_pattern(medium_basis, 8, amplitude=2.0)
    options = FitOptions(area_weighting=False)
    controls = [
        generate_synthetic_world(SyntheticWorldSpec(grid, spectrum, forced, 30, 1, seed,
                                                    control_id=f"control-{seed}"), medium_basis)[0]
        for seed in (1, 2)
    ]
    # every historical model is its own world with variances drawn around the control spectrum
    historicals = [
        generate_synthetic_world(SyntheticWorldSpec(grid, spectrum, forced, 2, 10, 100 + f,
                                                    logvar_sd=options.prior_logvar_sd,
                                                    historical_id=f"historical-{f}"), medium_basis)[1]
        for f in range(15)
    ]
    config = StudyConfig(controls, historicals, options, base_seed=11, credible_level=0.9)
    records = run_validation(config, threads=4, laplacian_basis=medium_basis)
    assert len(records) == 300
    assert sum(r.ok for r in records) >= 295
    assert 0.85 <= coverage_rate(records) <= 0.95


@pytest.mark.slow
def test_eof_normal_coverage_worsens_with_more_control_runs(coarse_basis):
    options = FitOptions(basis_kind="eof", likelihood_kind="normal", samples=1000, burn_in=500,
                         area_weighting=False)
    few = seeded_metrics(coarse_basis, options, n_p=15)
    many = seeded_metrics(coarse_basis, options, n_p=60)
    assert np.median(many[:, 0]) < np.median(few[:, 0])
    assert np.median(many[:, 2]) > np.median(few[:, 2])


@pytest.mark.slow
def test_laplace_chi2_is_at_least_as_accurate_as_eof_chi2(coarse_basis):
    laplace = FitOptions(samples=1000, burn_in=500, area_weighting=False)
    eof = FitOptions(basis_kind="eof", samples=1000, burn_in=500, area_weighting=False)
    laplace_rmse = seeded_metrics(coarse_basis, laplace, n_p=30)[:, 1]
    eof_rmse = seeded_metrics(coarse_basis, eof, n_p=30)[:, 1]
    assert np.median(laplace_rmse) <= np.median(eof_rmse)


@pytest.mark.parametrize("samples, truth", [([0.3, 1.7, 0.9, 2.4, -0.2], 1.0), ([1.0, 1.0, 1.0, 1.0, 1.0], 0.5)])
def test_crps_matches_integrated_squared_cdf_difference(samples, truth):
    s = np.sort(samples)
    knots = np.unique(np.concatenate([s, [truth]]))
    mids = 0.5 * (knots[1:] + knots[:-1])
    empirical = np.searchsorted(s, mids, side="right") / s.size
    step = (mids >= truth).astype(float)
    integral = float(np.sum((empirical - step) ** 2 * np.diff(knots)))
    assert crps(samples, truth) == pytest.approx(integral, abs=1e-6)
