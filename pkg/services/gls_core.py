"""Closed-form generalized least squares on projected data and the residual-consistency statistic"""
import numpy as np
import scipy.linalg
import scipy.stats
from models.fitting import GlsResult, ProjectedRegressionData
from services.covariance_model import project_field
from utils.constants import DF_KAPPA, DF_KAPPA_MINUS_ONE, DF_CONVENTIONS
from utils.errors import DataError, DegenerateSignalError


def _signal_precision(d):
    precision = float(np.sum(d.x_star ** 2 / d.lambdas))
    if precision <= 0:
        raise DegenerateSignalError("forced pattern has no projection on the retained components")
    return precision


def gls_beta(d):
    """sum(x* y* / lambda) / sum(x*^2 / lambda)"""
    return float(np.sum(d.x_star * d.y_star / d.lambdas)) / _signal_precision(d)


def gls_stderr(d):
    return _signal_precision(d) ** -0.5


def residual_statistic(d, beta):
    """Sum of squared variance-scaled projected residuals"""
    residuals = d.y_star - beta * d.x_star
    return float(np.sum(residuals ** 2 / d.lambdas))


def chi2_degrees_of_freedom(kappa, df_convention=DF_KAPPA_MINUS_ONE):
    if df_convention == DF_KAPPA_MINUS_ONE:
        return kappa - 1
    if df_convention == DF_KAPPA:
        return kappa
    raise DataError(f"unknown df convention {df_convention!r}; expected one of {DF_CONVENTIONS}")


def residual_consistency_test(d, beta, alpha=0.05, df_convention=DF_KAPPA_MINUS_ONE):
    """Classical residual-consistency check: reject when the statistic exceeds the upper-alpha chi^2 quantile"""
    statistic = residual_statistic(d, beta)
    df = chi2_degrees_of_freedom(d.kappa, df_convention)
    if df < 1:
        raise DataError(f"residual consistency test needs at least one degree of freedom (kappa={d.kappa})")
    p_value = float(scipy.stats.chi2.sf(statistic, df))
    return statistic, p_value, p_value < alpha


def gls_beta_matrix(y, x, covariance):
    """x^T C^+ y / x^T C^+ x with a dense pseudo-inverse"""
    pinv = scipy.linalg.pinvh(np.asarray(covariance, dtype=float))
    precision = float(x @ pinv @ x)
    if precision <= 0:
        raise DegenerateSignalError("forced pattern lies in the null space of the covariance")
    return float(x @ pinv @ y) / precision


def projected_data(basis, spectrum, y, x, kappa):
    return ProjectedRegressionData(
        project_field(basis, x, kappa), project_field(basis, y, kappa), spectrum.lambdas[:kappa])


def gls_fit(y, x, basis, spectrum, kappa, alpha=0.05, df_convention=DF_KAPPA_MINUS_ONE):
    """Frequentist reference fit at a fixed truncation"""
    d = projected_data(basis, spectrum, y, x, kappa)
    beta = gls_beta(d)
    se = gls_stderr(d)
    statistic, p_value, rejected = residual_consistency_test(d, beta, alpha, df_convention)
    z = float(scipy.stats.norm.ppf(0.975))
    return GlsResult(beta, se, kappa, statistic, p_value, rejected, (beta - z * se, beta + z * se))
