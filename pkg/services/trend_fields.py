"""Per-cell linear trends of gridded series and segmentation of control runs"""
import logging
import numpy as np
from models.fields import ControlEnsemble, FieldVector, GriddedSeries
from utils.constants import DEFAULT_WINDOW_YEARS, TREND_SCALE_YEARS
from utils.errors import DegenerateSeriesError, InsufficientDataError

logger = logging.getLogger(__name__)


def _centred_times(times):
    t = np.asarray(times, dtype=float)
    if t.size < 3:
        raise DegenerateSeriesError(f"a trend needs at least 3 points, got {t.size}")
    centred = t - t.mean()
    sxx = float(centred @ centred)
    if not sxx > 0:
        raise DegenerateSeriesError("time stamps are all equal")
    return centred, sxx


def ols_trend(times, values):
    """Least-squares slope of values on times, in units per 25 years"""
    centred, sxx = _centred_times(times)
    v = np.asarray(values, dtype=float)
    if v.shape != centred.shape:
        raise DegenerateSeriesError(f"{v.size} values for {centred.size} time stamps")
    return float(centred @ (v - v.mean())) / sxx * TREND_SCALE_YEARS


def annual_means(series):
    """Average consecutive blocks of one year; a trailing partial year is dropped"""
    per_year = series.steps_per_year()
    n_years = series.n_time // per_year
    if n_years == 0:
        raise InsufficientDataError(f"series {series.model_id or series.role} is shorter than one year")
    used = n_years * per_year
    times = series.times[:used].reshape(n_years, per_year).mean(axis=1)
    values = series.values[:used].reshape(n_years, per_year, series.grid.n_grid).mean(axis=1)
    return GriddedSeries(series.grid, times, values, series.role, series.model_id)


def trend_field(series, annual_mean=False):
    """OLS slope at every grid cell at once"""
    if annual_mean:
        series = annual_means(series)
    centred, sxx = _centred_times(series.times)
    slopes = centred @ (series.values - series.values.mean(axis=0)) / sxx * TREND_SCALE_YEARS
    return FieldVector(series.grid, slopes, series.role, series.model_id)


def segment_control(series, window_years=DEFAULT_WINDOW_YEARS):
    """Consecutive non-overlapping windows of exactly window_years; the remainder is dropped"""
    if window_years <= 0:
        raise DegenerateSeriesError("window_years must be positive")
    window = window_years * series.steps_per_year()
    n_segments = series.n_time // window
    if n_segments == 0:
        raise InsufficientDataError(
            f"series {series.model_id or series.role} has {series.n_time} steps, "
            f"shorter than one {window_years}-year window ({window} steps)")
    dropped = series.n_time - n_segments * window
    if dropped:
        logger.info(f"✂️ {series.model_id or series.role}: dropping {dropped} trailing steps after {n_segments} segments")
    return [series.slice(s * window, (s + 1) * window) for s in range(n_segments)]


def control_ensemble_from_series(series, window_years=DEFAULT_WINDOW_YEARS, annual_mean=False):
    """Trend field of every control segment, stacked into an ensemble"""
    segments = segment_control(series, window_years)
    fields = [trend_field(segment, annual_mean) for segment in segments]
    return ControlEnsemble.from_fields(series.model_id or series.role, fields)
