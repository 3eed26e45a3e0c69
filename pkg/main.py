"""Command-line entry point: basis, trends, spectrum, fit, validate, gls and apply"""
import functools
import logging
import sys
from pathlib import Path
import click
from config import Config
from models.basis import BasisKind
from models.grid import Grid
from models.manifest import load_manifest, resolve_options
from models.storage import (
    load_gridded_series, write_chain, write_gridded_field, write_json, write_table,
)
from services.covariance_model import area_weight_field
from services.gls_core import gls_fit
from services.laplacian_basis import get_laplacian_basis_service
from services.pipeline import build_study_config, fit_options_from, gather_inputs
from services.trend_fields import segment_control, trend_field
from services.validation_harness import (
    aggregate_metrics, enumerate_tuples, fit_against_control, fit_summary, prepare_control,
    run_validation, summarize_by_control, summarize_detection_attribution,
)
from utils.constants import (
    DRY_RUN_MSG, EXIT_OK, EXIT_USAGE, KERNEL_VARIANTS, PARTIAL_OUTPUT_MSG,
)
from utils.errors import FingerprintError, ManifestError
from utils.helpers import configure_logging, derive_seed

logger = logging.getLogger(__name__)


class RunContext:
    """Global flags plus the manifest they point at, resolved once per invocation"""
    def __init__(self, seed, manifest_path, out_dir, threads, basis_kind, likelihood_kind, samples, burn_in):
        self.manifest_path = manifest_path
        self.out_dir = Path(out_dir)
        self.threads = threads
        self.overrides = {
            "seed": seed,
            "basis_kind": basis_kind,
            "likelihood_kind": likelihood_kind,
            "samples": samples,
            "burn_in": burn_in,
        }
        self.written = []
        self._manifest = None

    @property
    def manifest(self):
        if self._manifest is None:
            if not self.manifest_path:
                raise ManifestError("this command needs --manifest")
            self._manifest = load_manifest(self.manifest_path)
        return self._manifest

    def resolved(self):
        options = self.manifest.options if self.manifest_path else None
        return resolve_options(options, self.overrides)

    def provenance(self, command, resolved=None, **extra):
        config = {"command": command, "options": resolved if resolved is not None else self.resolved()}
        if self.manifest_path:
            config["manifest"] = str(self.manifest_path)
        config.update(extra)
        return config

    def output(self, name):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        self.written.append(path)
        return path


def reports_errors(command):
    """Turn pipeline errors into a diagnostic and the matching exit code"""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        run = click.get_current_context().find_object(RunContext)
        try:
            return command(*args, **kwargs)
        except FingerprintError as e:
            logger.error(f"❌ {type(e).__name__}: {e}")
            click.echo(f"error: {e}", err=True)
            if run is not None and run.written:
                click.echo(PARTIAL_OUTPUT_MSG.format(out_dir=run.out_dir), err=True)
            raise click.exceptions.Exit(e.exit_code)
    return wrapper


@click.group()
@click.option("--seed", type=int, default=None, help="Base seed (default from FINGERPRINT_SEED)")
@click.option("--manifest", "manifest_path", type=click.Path(dir_okay=False), default=None, help="JSON manifest")
@click.option("--out-dir", type=click.Path(file_okay=False), default="out", show_default=True)
@click.option("--threads", type=int, default=None, help="Worker count for the validation sweep")
@click.option("--basis", "basis_kind", type=click.Choice([k.value for k in BasisKind]), default=None)
@click.option("--klik", "likelihood_kind", type=click.Choice(["chi2", "normal"]), default=None)
@click.option("--samples", type=click.IntRange(min=1), default=None, help="Retained MCMC draws")
@click.option("--burn-in", type=click.IntRange(min=0), default=None, help="Discarded MCMC draws")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
@click.pass_context
def cli(ctx, seed, manifest_path, out_dir, threads, basis_kind, likelihood_kind, samples, burn_in, verbose):
    """Bayesian optimal fingerprinting with Laplacian or EOF covariance truncation."""
    configure_logging("DEBUG" if verbose else Config.LOG_LEVEL)
    ctx.obj = RunContext(seed, manifest_path, out_dir, threads if threads is not None else Config.THREADS,
                         basis_kind, likelihood_kind, samples, burn_in)


@cli.command()
@click.option("--n-lat", type=int, default=None)
@click.option("--n-lon", type=int, default=None)
@click.option("--kernel", type=click.Choice(KERNEL_VARIANTS), default=None)
@click.pass_obj
@reports_errors
def basis(run, n_lat, n_lon, kernel):
    """Compute (or load from cache) the Laplacian basis for a grid."""
    if n_lat is None or n_lon is None:
        grid = run.manifest.grid.to_grid()
    else:
        grid = Grid(n_lat, n_lon)
    resolved = run.resolved()
    kernel = kernel or resolved["kernel"]
    laplace = get_laplacian_basis_service().get_basis(grid, kernel)
    rows = [{"component": i + 1, "eigenvalue": value} for i, value in enumerate(laplace.eigenvalues)]
    path = run.output(f"basis_{grid.n_lat}x{grid.n_lon}_{kernel}.csv")
    write_table(path, rows, run.provenance("basis", resolved, grid=list(grid.descriptor), kernel=kernel))
    click.echo(f"basis: {laplace.n_basis} components on grid {grid.n_lat}x{grid.n_lon} -> {path}")


@cli.command()
@click.argument("series_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--control", is_flag=True, help="Segment into windows and write one trend field per segment")
@click.option("--window-years", type=click.IntRange(min=1), default=None)
@click.option("--annual-mean", is_flag=True, help="Average to annual means before the regression")
@click.pass_obj
@reports_errors
def trends(run, series_path, control, window_years, annual_mean):
    """Convert a gridded series into trend fields."""
    resolved = run.resolved()
    grid = run.manifest.grid.to_grid() if run.manifest_path else None
    series = load_gridded_series(series_path, grid)
    window_years = window_years or resolved["window_years"]
    annual_mean = annual_mean or resolved["annual_mean"]
    config = run.provenance("trends", resolved, source=str(series_path), control=control,
                            window_years=window_years, annual_mean=annual_mean)
    stem = Path(series_path).stem
    segments = segment_control(series, window_years) if control else [series]
    for s, segment in enumerate(segments):
        name = f"{stem}_seg{s:03d}.txt" if control else f"{stem}_trend.txt"
        write_gridded_field(run.output(name), trend_field(segment, annual_mean), config)
    click.echo(f"trends: wrote {len(segments)} trend field(s) to {run.out_dir}")


@cli.command()
@click.pass_obj
@reports_errors
def spectrum(run):
    """Empirical variance of every control model along each basis component."""
    resolved = run.resolved()
    run.manifest.require_roles("control")
    options = fit_options_from(resolved)
    controls, _, _ = gather_inputs(run.manifest, resolved)
    rows = []
    for control in controls:
        _, control_spectrum = prepare_control(control, options)
        rows.extend({"control_id": control.model_id, "basis": options.basis_kind.value,
                     "component": i + 1, "lambda": value}
                    for i, value in enumerate(control_spectrum.lambdas))
    path = run.output("spectrum.csv")
    write_table(path, rows, run.provenance("spectrum", resolved))
    click.echo(f"spectrum: {len(controls)} control model(s) -> {path}")


def _fit_inputs(run, resolved, control_index, historical_index):
    run.manifest.require_roles("control", "historical", "observation")
    controls, historicals, observation = gather_inputs(run.manifest, resolved)
    if not 0 <= control_index < len(controls) or not 0 <= historical_index < len(historicals):
        raise ManifestError(f"model index out of range ({len(controls)} controls, {len(historicals)} historicals)")
    return controls, historicals, observation


@cli.command()
@click.option("--control-index", type=int, default=0, show_default=True)
@click.option("--historical-index", type=int, default=0, show_default=True)
@click.pass_obj
@reports_errors
def fit(run, control_index, historical_index):
    """Two-fit the observation against a forced ensemble mean and one control model."""
    resolved = run.resolved()
    options = fit_options_from(resolved)
    controls, historicals, observation = _fit_inputs(run, resolved, control_index, historical_index)
    control, historical = controls[control_index], historicals[historical_index]
    control_basis, control_spectrum = prepare_control(control, options)
    result = fit_against_control(observation, historical.mean(), control_basis, control_spectrum, options,
                                 derive_seed(resolved["seed"], control_index, historical_index))
    summary = fit_summary(result, resolved["credible_level"])
    config = run.provenance("fit", resolved, control_id=control.model_id, historical_id=historical.model_id)
    write_json(run.output("fit_result.json"), summary, config)
    write_chain(run.output("chain.csv"), result.samples, config)
    posterior = result.kappa_posterior
    write_table(run.output("kappa_posterior.csv"),
                [{"kappa": int(k), "probability": p} for k, p in zip(posterior.support, posterior.probabilities)],
                config)
    for key in ("beta_post_mean", "beta_post_sd", "kappa_post", "detection_statistic", "attribution_statistic"):
        click.echo(f"{key}: {summary[key]}")


@cli.command()
@click.option("--dry-run", is_flag=True, help="Only count the tuples that would be fitted")
@click.pass_obj
@reports_errors
def validate(run, dry_run):
    """Leave-one-out known-truth study over every (control, historical, member) tuple."""
    resolved = run.resolved()
    run.manifest.require_roles("control", "historical")
    study = build_study_config(run.manifest, resolved)
    tuples = enumerate_tuples(len(study.controls), [h.n_h for h in study.historicals])
    if dry_run:
        click.echo(DRY_RUN_MSG.format(n_tuples=len(tuples)))
        return
    records = run_validation(study, run.threads)
    config = run.provenance("validate", resolved)
    write_table(run.output("records.csv"), [r.as_row() for r in records], config)
    aggregates = aggregate_metrics(records)
    write_table(run.output("aggregates.csv"), aggregates.to_dict("records"), config)
    write_table(run.output("summary_by_control.csv"), summarize_by_control(aggregates).to_dict("records"), config)
    n_failed = sum(not r.ok for r in records)
    click.echo(f"validate: {len(records)} records ({n_failed} failed) -> {run.out_dir}")


@cli.command()
@click.option("--kappa", type=click.IntRange(min=2), required=True)
@click.option("--control-index", type=int, default=0, show_default=True)
@click.option("--historical-index", type=int, default=0, show_default=True)
@click.option("--alpha", type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True), default=0.05)
@click.pass_obj
@reports_errors
def gls(run, kappa, control_index, historical_index, alpha):
    """Closed-form GLS reference fit at a fixed truncation."""
    resolved = run.resolved()
    options = fit_options_from(resolved)
    controls, historicals, observation = _fit_inputs(run, resolved, control_index, historical_index)
    control_basis, control_spectrum = prepare_control(controls[control_index], options)
    y, x = observation, historicals[historical_index].mean()
    if options.area_weighting:
        y, x = area_weight_field(y.grid, y), area_weight_field(x.grid, x)
    result = gls_fit(y, x, control_basis, control_spectrum, kappa, alpha, options.df_convention)
    payload = {
        "beta": result.beta,
        "stderr": result.stderr,
        "kappa": result.kappa,
        "statistic": result.statistic,
        "p_value": result.p_value,
        "rejected": result.rejected,
        "ci_low": result.interval[0],
        "ci_high": result.interval[1],
    }
    write_json(run.output("gls_result.json"), payload, run.provenance("gls", resolved, alpha=alpha))
    for key in ("beta", "stderr", "statistic", "p_value"):
        click.echo(f"{key}: {payload[key]}")


@cli.command()
@click.pass_obj
@reports_errors
def apply(run):
    """Fit the observation against every (control, historical) model pair."""
    resolved = run.resolved()
    options = fit_options_from(resolved)
    controls, historicals, observation = _fit_inputs(run, resolved, 0, 0)
    rows, fits, errors = [], [], []
    for c, control in enumerate(controls):
        control_basis, control_spectrum = prepare_control(control, options)
        for f, historical in enumerate(historicals):
            try:
                result = fit_against_control(observation, historical.mean(), control_basis, control_spectrum,
                                             options, derive_seed(resolved["seed"], c, f))
            except FingerprintError as e:
                errors.append(e)
                logger.error(f"❌ Fit failed for pair ({control.model_id}, {historical.model_id}): {e}")
                rows.append({"c": c, "f": f, "control_id": control.model_id,
                             "historical_id": historical.model_id, "status": "failed", "error": str(e)})
                continue
            fits.append(result)
            summary = fit_summary(result, resolved["credible_level"])
            summary.pop("kappa_history")
            rows.append({"c": c, "f": f, "control_id": control.model_id, "historical_id": historical.model_id,
                         "status": "ok", "error": "", **summary})
    config = run.provenance("apply", resolved)
    write_table(run.output("apply_pairs.csv"), rows, config)
    if not fits:
        raise errors[-1]
    table = summarize_detection_attribution(fits)
    write_json(run.output("apply_summary.json"), table, config)
    click.echo(f"apply: {table['n_detected']}/{table['n_fits']} detected, "
               f"{table['n_attributed']}/{table['n_fits']} attributed, "
               f"mean detection statistic {table['mean_detection_statistic']:.2f}")


def cli_dispatch(argv=None):
    """Run the CLI and return its exit status instead of exiting"""
    try:
        rv = cli.main(args=argv, prog_name="fingerprint", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    return rv if isinstance(rv, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(cli_dispatch())
