"""
Hierarchical Bayesian regression of projected observations on a forced pattern,
the two conditional likelihood models for the truncation number kappa, the
Metropolis-within-Gibbs sampler and the iterative two-fit procedure.
"""
import logging
import math
import numpy as np
import scipy.stats
from scipy.special import logsumexp
from models.fields import require_same_grid
from models.fitting import FitResult, FullProjection, KappaPosterior, LikelihoodKind, PosteriorSamples, Theta
from services.covariance_model import project_field
from services.gls_core import chi2_degrees_of_freedom, gls_beta
from utils.constants import (
    ADAPTATION_BATCH, BETA_TOLERANCE, DEFAULT_BURN_IN, DEFAULT_KAPPA_CAP, DEFAULT_MAX_ITERATIONS,
    DEFAULT_SAMPLES, DF_KAPPA_MINUS_ONE, FIT_DONE_MSG, INITIAL_KAPPA, INITIAL_PROPOSAL_SD,
    MAX_ADAPTATION_STEP, MIN_KAPPA, TARGET_ACCEPTANCE,
)
from utils.errors import (
    DataError, DegenerateSignalError, EmptyKappaSupportError, InsufficientDataError,
    NonFiniteLogPosteriorError, ZeroVarianceError,
)

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


def _positive_lambdas(lambdas):
    lam = np.asarray(lambdas, dtype=float)
    if np.any(~(lam > 0)):
        bad = int(np.argmax(~(lam > 0)))
        raise ZeroVarianceError(f"component {bad + 1} has non-positive variance {lam[bad]!r}")
    return lam


def log_likelihood_regression(theta, spec):
    """Gaussian log-likelihood of the first theta.kappa projected residuals"""
    lam = _positive_lambdas(theta.lambdas)
    kappa = theta.kappa
    if kappa > spec.n_basis:
        raise DataError(f"theta has {kappa} variances but only {spec.n_basis} components are available")
    residuals = spec.y_star_full[:kappa] - theta.beta * spec.x_star_full[:kappa]
    return float(-0.5 * np.sum(LOG_2PI + np.log(lam) + residuals ** 2 / lam))


def _log_lambda_target(log_lam, squared_residuals, prior_mean, prior_sd):
    return (-0.5 * log_lam - 0.5 * squared_residuals * np.exp(-log_lam)
            - 0.5 * ((log_lam - prior_mean) / prior_sd) ** 2)


def sample_posterior(spec, samples=DEFAULT_SAMPLES, burn_in=DEFAULT_BURN_IN, seed=0):
    """
    Metropolis-within-Gibbs on (beta, log lambda_1..lambda_kappa).

    beta is drawn from its exact Gaussian conditional under the flat prior. Each
    log lambda_i gets its own random-walk Metropolis step; the steps are
    independent given beta, so they are taken together as one vector update.
    Proposal scales adapt in batches during burn-in and are frozen afterwards.
    With prior_logvar_sd == 0 the variances stay at lambda-hat.
    """
    if samples <= 0 or burn_in < 0:
        raise DataError("samples must be positive and burn_in non-negative")
    truncated = spec.truncated()
    x, y = truncated.x_star, truncated.y_star
    kappa = spec.kappa
    prior_mean = np.log(truncated.lambdas)
    log_lam = prior_mean.copy()

    rng = np.random.default_rng(seed)
    proposal_sd = np.full(kappa, INITIAL_PROPOSAL_SD)
    batch_accepts = np.zeros(kappa)
    kept_accepts = np.zeros(kappa)
    beta_draws = np.empty(samples)
    lambda_draws = np.empty((samples, kappa))

    for step in range(burn_in + samples):
        lam = np.exp(log_lam)
        precision = float(np.sum(x * x / lam))
        if not precision > 0:
            raise DegenerateSignalError("forced pattern has no projection on the retained components")
        beta = float(np.sum(x * y / lam)) / precision + rng.standard_normal() / math.sqrt(precision)

        if not spec.fixed_lambda:
            squared = (y - beta * x) ** 2
            current = _log_lambda_target(log_lam, squared, prior_mean, spec.prior_logvar_sd)
            if not np.all(np.isfinite(current)):
                raise NonFiniteLogPosteriorError(f"non-finite log-posterior at step {step} (seed {seed})")
            proposal = log_lam + proposal_sd * rng.standard_normal(kappa)
            with np.errstate(over="ignore", invalid="ignore"):
                candidate = _log_lambda_target(proposal, squared, prior_mean, spec.prior_logvar_sd)
                accept = np.log(rng.random(kappa)) < candidate - current
            accept &= np.isfinite(candidate)
            log_lam = np.where(accept, proposal, log_lam)

            if step < burn_in:
                batch_accepts += accept
                if (step + 1) % ADAPTATION_BATCH == 0:
                    batch = (step + 1) // ADAPTATION_BATCH
                    delta = min(MAX_ADAPTATION_STEP, batch ** -0.5)
                    rate = batch_accepts / ADAPTATION_BATCH
                    proposal_sd *= np.exp(np.where(rate > TARGET_ACCEPTANCE, delta, -delta))
                    batch_accepts[:] = 0.0
            else:
                kept_accepts += accept

        if step >= burn_in:
            beta_draws[step - burn_in] = beta
            lambda_draws[step - burn_in] = np.exp(log_lam)

    return PosteriorSamples(
        beta=beta_draws,
        lambdas=lambda_draws,
        kappa=kappa,
        burn_in=burn_in,
        seed=seed,
        acceptance_rates={"beta": np.ones(1), "log_lambda": kept_accepts / samples},
    )


def posterior_point_estimate(samples, lambda_tail=None):
    """Posterior means of beta and of each lambda_i, optionally extended by lambda-hat beyond kappa"""
    lambdas = samples.lambdas.mean(axis=0)
    if lambda_tail is not None:
        lambdas = np.concatenate([lambdas, np.asarray(lambda_tail, dtype=float)[samples.kappa:]])
    return Theta(float(np.mean(samples.beta)), lambdas)


def _effective_lambdas(theta, data):
    """theta's variances where it carries them, lambda-hat beyond"""
    lam = _positive_lambdas(theta.lambdas)
    if lam.size > data.n_eval:
        lam = lam[:data.n_eval]
    return np.concatenate([lam, _positive_lambdas(data.lambda_hat[lam.size:])])


def _check_kappa(kappa, upper):
    if kappa < MIN_KAPPA:
        raise DataError(f"kappa must be at least {MIN_KAPPA}, got {kappa}")
    if kappa > upper:
        raise DataError(f"kappa {kappa} exceeds the {upper} available components")


def kappa_loglik_chi2(kappa, theta, data, df_convention=DF_KAPPA_MINUS_ONE):
    """chi^2 log density of the scaled residual sum over the first kappa components"""
    _check_kappa(kappa, data.n_eval)
    lam = _effective_lambdas(theta, data)[:kappa]
    residuals = data.y_star[:kappa] - theta.beta * data.x_star[:kappa]
    statistic = float(np.sum(residuals ** 2 / lam))
    return float(scipy.stats.chi2.logpdf(statistic, chi2_degrees_of_freedom(kappa, df_convention)))


def kappa_loglik_normal(kappa, theta, data, kappa_max=None):
    """Gaussian log-likelihood of all components up to kappa_max, mean beta x* up to kappa and zero after"""
    kappa_max = data.n_eval if kappa_max is None else min(kappa_max, data.n_eval)
    _check_kappa(kappa, kappa_max)
    lam = _effective_lambdas(theta, data)[:kappa_max]
    mean = np.zeros(kappa_max)
    mean[:kappa] = theta.beta * data.x_star[:kappa]
    residuals = data.y_star[:kappa_max] - mean
    return float(-0.5 * np.sum(LOG_2PI + np.log(lam) + residuals ** 2 / lam))


def kappa_log_likelihoods(kind, theta, data, kappa_max=None, df_convention=DF_KAPPA_MINUS_ONE):
    """Log-likelihood for every kappa in 2..kappa_max at once, via cumulative sums"""
    kind = LikelihoodKind(kind)
    kappa_max = data.n_eval if kappa_max is None else min(kappa_max, data.n_eval)
    if kappa_max < MIN_KAPPA:
        raise EmptyKappaSupportError(f"no admissible kappa: only {kappa_max} components available")
    support = np.arange(MIN_KAPPA, kappa_max + 1)
    lam = _effective_lambdas(theta, data)[:kappa_max]
    y = data.y_star[:kappa_max]
    x = data.x_star[:kappa_max]
    fitted = (y - theta.beta * x) ** 2 / lam

    if kind == LikelihoodKind.CHI_SQUARED:
        statistics = np.cumsum(fitted)[support - 1]
        dfs = np.array([chi2_degrees_of_freedom(int(k), df_convention) for k in support])
        return support, scipy.stats.chi2.logpdf(statistics, dfs)

    log_norm = LOG_2PI + np.log(lam)
    with_signal = np.cumsum(-0.5 * (log_norm + fitted))
    without_signal = np.cumsum(-0.5 * (log_norm + y ** 2 / lam))
    loglik = with_signal[support - 1] + (without_signal[-1] - without_signal[support - 1])
    return support, loglik


def _normalize(log_likelihoods):
    ll = np.asarray(log_likelihoods, dtype=float)
    if np.any(np.isnan(ll)):
        raise NonFiniteLogPosteriorError("kappa log-likelihood evaluated to NaN")
    if np.all(np.isneginf(ll)):
        raise EmptyKappaSupportError("every admissible kappa has zero likelihood")
    spikes = np.isposinf(ll)
    if np.any(spikes):
        # zero residual under a chi^2_1 density: all mass on the infinite entries
        ll = np.where(spikes, 0.0, -np.inf)
    return ll - logsumexp(ll)


def kappa_posterior(kind, theta, data, kappa_max=None, df_convention=DF_KAPPA_MINUS_ONE):
    """Posterior over kappa in 2..kappa_max under a flat prior"""
    kind = LikelihoodKind(kind)
    support, loglik = kappa_log_likelihoods(kind, theta, data, kappa_max, df_convention)
    return KappaPosterior(support, _normalize(loglik), kind)


def full_projection(y, x, basis, spectrum, kappa_cap=DEFAULT_KAPPA_CAP):
    """Project y and x on the leading min(kappa_cap, n_basis) components"""
    require_same_grid(y, x)
    basis.require_grid(y.grid)
    if spectrum.basis is not basis:
        raise DataError("spectrum was estimated on a different basis")
    n_eval = min(kappa_cap, basis.n_basis)
    if n_eval < MIN_KAPPA:
        raise InsufficientDataError(f"basis has {basis.n_basis} components; at least {MIN_KAPPA} are needed")
    return FullProjection(
        project_field(basis, y, n_eval),
        project_field(basis, x, n_eval),
        _positive_lambdas(spectrum.lambdas[:n_eval]),
    )


def two_fit(y, x, basis, spectrum, likelihood_kind=LikelihoodKind.CHI_SQUARED,
            samples=DEFAULT_SAMPLES, burn_in=DEFAULT_BURN_IN, seed=0, *,
            kappa_cap=DEFAULT_KAPPA_CAP, df_convention=DF_KAPPA_MINUS_ONE,
            prior_logvar_sd=1.0, max_iterations=DEFAULT_MAX_ITERATIONS):
    """
    Alternate between choosing kappa from its conditional posterior and
    sampling (beta, lambda) at that kappa, until kappa settles.

    Chains are cached per kappa and always use `seed`, so revisiting a kappa
    reproduces its chain exactly. A two-cycle between kappa values is settled
    on the smaller one. Hitting max_iterations returns the last iterate with
    converged=False.
    """
    likelihood_kind = LikelihoodKind(likelihood_kind)
    data = full_projection(y, x, basis, spectrum, kappa_cap)
    kappa_max = data.n_eval

    beta0 = gls_beta(data.model_spec(INITIAL_KAPPA).truncated())
    theta = Theta(beta0, data.lambda_hat.copy())
    posterior = kappa_posterior(likelihood_kind, theta, data, kappa_max, df_convention)

    chains = {}
    history, betas, posteriors = [], [], []
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        kappa = posterior.map_kappa
        if kappa not in chains:
            spec = data.model_spec(kappa, prior_logvar_sd)
            chains[kappa] = sample_posterior(spec, samples, burn_in, seed)
        theta = posterior_point_estimate(chains[kappa], data.lambda_hat)
        history.append(kappa)
        betas.append(theta.beta)
        posteriors.append(posterior)

        if len(history) >= 2 and history[-2] == kappa and abs(betas[-1] - betas[-2]) < BETA_TOLERANCE:
            converged = True
            break
        if len(history) >= 3 and history[-3] == kappa and history[-2] != kappa:
            smaller = min(kappa, history[-2])
            logger.info(f"🔄 kappa oscillates between {history[-2]} and {kappa}; keeping {smaller}")
            if smaller != kappa:
                posteriors.append(posteriors[-2])
                history.append(smaller)
            converged = True
            break
        posterior = kappa_posterior(likelihood_kind, theta, data, kappa_max, df_convention)

    kappa_post = history[-1]
    chain = chains[kappa_post]
    if not converged:
        logger.warning(f"⚠️ two-fit did not converge in {max_iterations} iterations (kappa history {history[-5:]})")
    beta_sd = float(np.std(chain.beta, ddof=1)) if chain.m > 1 else 0.0
    result = FitResult(
        kappa_posterior=posteriors[-1],
        kappa_post=kappa_post,
        samples=chain,
        beta_post_mean=float(np.mean(chain.beta)),
        beta_post_sd=beta_sd,
        n_iterations=iterations,
        converged=converged,
        kappa_history=history,
    )
    logger.info(FIT_DONE_MSG.format(converged=converged, iterations=result.n_iterations,
                                    kappa=kappa_post, beta=result.beta_post_mean, sd=beta_sd))
    return result
