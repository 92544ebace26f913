"""Model 1: component-wise Metropolis-Hastings for the 3PNO model.

Priors::

    theta_i ~ N(0, sigma2_i)          sigma2_i ~ InvGamma(alpha_theta, beta_theta)
    log alpha_j ~ N(mu_a, sigma_a^2)  beta_j ~ N(0, sigma_beta^2)
    gamma_j ~ Beta(s, t)

theta and beta move by Gaussian random walks, alpha on the log scale and
gamma on the logit scale; sigma2 is drawn from its inverse-gamma full
conditional. Within a block the components are conditionally independent,
so all of them are proposed and accepted in one vectorized step.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit, logit, ndtr

from .response import PROB_CLIP, probit_start
from .results import FitResult, McmcConfig, Trace, check_performance_matrix
from .rng import stream

__all__ = [
    "Model1Priors",
    "Model1State",
    "fit_mh",
    "initial_state",
    "log_posterior",
    "loglik_3pno",
    "mh_step",
]

BLOCKS = ("theta", "alpha", "beta", "gamma", "sigma")


@dataclass(frozen=True)
class Model1Priors:
    mu_a: float = 0.0
    sigma_a: float = 1.0
    sigma_beta: float = 1.0
    alpha_theta: float = 2.0
    beta_theta: float = 1.0
    s: float = 1.0
    t: float = 4.0

    def __post_init__(self):
        for name in ("sigma_a", "sigma_beta", "alpha_theta", "beta_theta", "s", "t"):
            if getattr(self, name) <= 0:
                raise ValueError(f"prior parameter {name} must be positive")


@dataclass(frozen=True)
class Model1State:
    theta: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    sigma2: np.ndarray


def _cell_loglik(Y, theta, alpha, beta, gamma):
    F = ndtr(np.outer(theta, alpha) - beta[None, :])
    P = F + gamma[None, :] * (1.0 - F)
    P = np.clip(P, PROB_CLIP, 1.0 - PROB_CLIP)
    return np.where(Y == 1, np.log(P), np.log1p(-P))


def loglik_3pno(Y, theta, alpha, beta, gamma):
    """Bernoulli log-likelihood of ``Y`` under the 3PNO model.

    Probabilities are clipped to ``[1e-12, 1 - 1e-12]`` before taking logs.
    """
    Y = np.asarray(Y)
    theta, alpha, beta, gamma = (np.asarray(v, dtype=float) for v in (theta, alpha, beta, gamma))
    if Y.shape != (theta.size, beta.size) or not (alpha.size == beta.size == gamma.size):
        raise ValueError(
            f"matrix of shape {Y.shape} does not match {theta.size} abilities "
            f"and {beta.size} items"
        )
    return float(np.sum(_cell_loglik(Y, theta, alpha, beta, gamma)))


def _log_prior_theta(theta, sigma2):
    return -0.5 * theta ** 2 / sigma2 - 0.5 * np.log(sigma2)


def _log_prior_log_alpha(u, priors):
    return -0.5 * ((u - priors.mu_a) / priors.sigma_a) ** 2


def _log_prior_beta(beta, priors):
    return -0.5 * (beta / priors.sigma_beta) ** 2


def _log_prior_gamma(gamma, priors):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (priors.s - 1) * np.log(gamma) + (priors.t - 1) * np.log1p(-gamma)
    valid = (gamma >= 0) & (gamma < 1)
    if priors.s < 1:
        valid &= gamma > 0
    return np.where(valid, out, -np.inf)


def _log_prior_sigma2(sigma2, priors):
    return -(priors.alpha_theta + 1) * np.log(sigma2) - priors.beta_theta / sigma2


def log_posterior(Y, state, priors=None):
    """Unnormalized log posterior density of ``state`` (alpha on the log scale)."""
    priors = priors or Model1Priors()
    if np.any(state.alpha <= 0) or np.any(state.sigma2 <= 0):
        return -np.inf
    lp_gamma = _log_prior_gamma(state.gamma, priors)
    if not np.all(np.isfinite(lp_gamma)):
        return -np.inf
    return float(
        loglik_3pno(Y, state.theta, state.alpha, state.beta, state.gamma)
        + np.sum(_log_prior_theta(state.theta, state.sigma2))
        + np.sum(_log_prior_log_alpha(np.log(state.alpha), priors))
        + np.sum(_log_prior_beta(state.beta, priors))
        + np.sum(lp_gamma)
        + np.sum(_log_prior_sigma2(state.sigma2, priors))
    )


def _accept(log_ratio, rng):
    """Metropolis acceptance: ``u < min(1, exp(log_ratio))`` componentwise."""
    log_ratio = np.where(np.isnan(log_ratio), -np.inf, log_ratio)
    return np.log(rng.random(np.shape(log_ratio))) < log_ratio


def mh_step(Y, state, block, rng, priors=None, step=0.2, cell=None):
    """Update one parameter block; return ``(new_state, accepted, cell)``.

    ``cell`` is the current per-entry log-likelihood matrix (recomputed when
    omitted) and is returned updated so sweeps need not recompute it.
    ``accepted`` is a boolean array, one entry per component of the block
    (all True for the directly drawn ``sigma`` block).
    """
    priors = priors or Model1Priors()
    if cell is None:
        cell = _cell_loglik(Y, state.theta, state.alpha, state.beta, state.gamma)

    if block == "sigma":
        shape = priors.alpha_theta + 0.5
        rate = priors.beta_theta + 0.5 * state.theta ** 2
        sigma2 = rate / rng.gamma(shape, size=state.theta.shape)
        return replace(state, sigma2=sigma2), np.ones(state.theta.shape, bool), cell

    if block == "theta":
        prop = state.theta + step * rng.standard_normal(state.theta.shape)
        new_cell = _cell_loglik(Y, prop, state.alpha, state.beta, state.gamma)
        log_ratio = (
            new_cell.sum(axis=1) - cell.sum(axis=1)
            + _log_prior_theta(prop, state.sigma2)
            - _log_prior_theta(state.theta, state.sigma2)
        )
        acc = _accept(log_ratio, rng)
        cell = np.where(acc[:, None], new_cell, cell)
        return replace(state, theta=np.where(acc, prop, state.theta)), acc, cell

    m = state.beta.shape
    if block == "alpha":
        u = np.log(state.alpha)
        u_prop = u + step * rng.standard_normal(m)
        prop = np.exp(u_prop)
        new_cell = _cell_loglik(Y, state.theta, prop, state.beta, state.gamma)
        prior_diff = _log_prior_log_alpha(u_prop, priors) - _log_prior_log_alpha(u, priors)
        field, current = "alpha", state.alpha
    elif block == "beta":
        prop = state.beta + step * rng.standard_normal(m)
        new_cell = _cell_loglik(Y, state.theta, state.alpha, prop, state.gamma)
        prior_diff = _log_prior_beta(prop, priors) - _log_prior_beta(state.beta, priors)
        field, current = "beta", state.beta
    elif block == "gamma":
        with np.errstate(divide="ignore"):
            v = logit(state.gamma)
        prop = expit(v + step * rng.standard_normal(m))
        ok = (prop >= 0) & (prop < 1)
        prop = np.where(ok, prop, state.gamma)
        new_cell = _cell_loglik(Y, state.theta, state.alpha, state.beta, prop)
        # density on the logit scale: Beta kernel times the Jacobian gamma(1-gamma)
        with np.errstate(divide="ignore"):
            jac_new = np.log(prop) + np.log1p(-prop)
            jac_old = np.log(state.gamma) + np.log1p(-state.gamma)
        prior_diff = (
            _log_prior_gamma(prop, priors) + jac_new
            - _log_prior_gamma(state.gamma, priors) - jac_old
        )
        prior_diff = np.where(ok, prior_diff, -np.inf)
        field, current = "gamma", state.gamma
    else:
        raise ValueError(f"unknown block {block!r}; expected one of {BLOCKS}")

    log_ratio = new_cell.sum(axis=0) - cell.sum(axis=0) + prior_diff
    acc = _accept(log_ratio, rng)
    cell = np.where(acc[None, :], new_cell, cell)
    return replace(state, **{field: np.where(acc, prop, current)}), acc, cell


def initial_state(Y):
    """Probit starting values from clipped row and column success rates."""
    Y = check_performance_matrix(Y)
    theta, beta = probit_start(Y)
    n, m = Y.shape
    return Model1State(theta, np.ones(m), beta, np.full(m, 0.1), np.ones(n))


def fit_mh(Y, priors=None, config=None, init=None, update=BLOCKS):
    """Run one Metropolis-within-Gibbs chain.

    Each iteration sweeps the blocks in ``update`` (default: theta, alpha,
    beta, gamma, sigma); blocks left out stay at their initial values.
    Returns posterior means over the retained draws.
    """
    Y = check_performance_matrix(Y)
    priors = priors or Model1Priors()
    config = config or McmcConfig()
    state = init if init is not None else initial_state(Y)
    if unknown := set(update) - set(BLOCKS):
        raise ValueError(f"unknown blocks {sorted(unknown)}")
    lp0 = log_posterior(Y, state, priors)
    if not np.isfinite(lp0):
        raise ValueError("log posterior is not finite at the initial state")

    rng = stream(config.seed, "model1")
    order = [b for b in BLOCKS if b in update]
    n_keep = len(range(config.burn_in, config.n_iterations, config.thinning))
    draws = {name: np.empty((n_keep, getattr(state, name).size))
             for name in ("theta", "alpha", "beta", "gamma", "sigma2")}
    accepted = {b: 0.0 for b in order if b != "sigma"}
    cell = _cell_loglik(Y, state.theta, state.alpha, state.beta, state.gamma)
    k = 0
    for it in range(config.n_iterations):
        for block in order:
            state, acc, cell = mh_step(Y, state, block, rng, priors, config.step(block), cell)
            if block in accepted:
                accepted[block] += acc.mean()
        if config.retained(it):
            for name in draws:
                draws[name][k] = getattr(state, name)
            k += 1

    acceptance = {b: v / config.n_iterations for b, v in accepted.items()}
    means = {name: arr.mean(axis=0) for name, arr in draws.items()}
    estimate = Model1State(means["theta"], means["alpha"], means["beta"],
                           means["gamma"], means["sigma2"])
    diagnostics = {
        "log_posterior_initial": lp0,
        "log_posterior_estimate": log_posterior(Y, estimate, priors),
        "n_iterations": config.n_iterations,
        "burn_in": config.burn_in,
        "thinning": config.thinning,
        "seed": config.seed,
        "sigma2_mean": means["sigma2"],
    }
    return FitResult(
        engine="model1",
        theta=means["theta"],
        alpha=means["alpha"],
        beta=means["beta"],
        gamma=means["gamma"],
        trace=Trace(draws, acceptance),
        diagnostics=diagnostics,
    )
