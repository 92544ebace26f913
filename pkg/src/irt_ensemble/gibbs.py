"""Model 2: data-augmented Gibbs sampler for the normal-ogive model with guessing.

Latent indicators ``W`` mark entries answered from the classifier's stable
region and ``Z ~ N(eta, 1)`` is the latent propensity with ``W = [Z >= 0]``;
a correct response with ``W = 0`` is a guess. Every full conditional is then
a standard distribution:

    W | rest      Bernoulli(Phi(eta) / (gamma + (1 - gamma) Phi(eta))) where Y = 1, else 0
    Z | rest      N(eta, 1) truncated to [0, inf) or (-inf, 0) by W
    theta_i       normal (conjugate regression on the Z row)
    (alpha, beta) bivariate normal per item, alpha truncated to be positive
    M_j           bivariate normal (hierarchical prior mean of the item pair)
    gamma_j       Beta(#{W=0, Y=1} + s, #{W=0, Y=0} + t)
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri, ndtri_exp

from .response import clipped_rate, probit_start
from .results import FitResult, McmcConfig, Trace, check_performance_matrix
from .rng import stream

__all__ = [
    "AugmentedState",
    "Model2Priors",
    "check_augmentation",
    "fit_gibbs",
    "gibbs_sweep",
    "sample_M",
    "sample_W",
    "sample_Z",
    "sample_gamma",
    "sample_item_params",
    "sample_theta",
    "truncated_normal",
]

GIBBS_DEFAULTS = McmcConfig(n_iterations=3000, burn_in=1000)
MAX_ALPHA_REDRAWS = 100


@dataclass(frozen=True)
class Model2Priors:
    """Hyperparameters. ``tau`` (2 x m: rows tau_alpha, tau_beta) defaults to
    ``tau_alpha = 1`` and ``tau_beta = -Phi^-1(clipped column success rate)``."""

    mu: float = 0.0
    sigma2: float = 1.0
    sigma_alpha: float = 1.0
    sigma_beta: float = 1.0
    rho: float = 0.0
    s: float = 1.0
    t: float = 4.0
    tau: np.ndarray | None = None

    def __post_init__(self):
        if self.sigma2 <= 0 or self.sigma_alpha <= 0 or self.sigma_beta <= 0:
            raise ValueError("prior scales must be positive")
        if not -1 < self.rho < 1:
            raise ValueError("rho must lie in (-1, 1)")
        if self.s <= 0 or self.t <= 0:
            raise ValueError("Beta prior parameters must be positive")

    def sigma_phi(self):
        sa, sb, r = self.sigma_alpha, self.sigma_beta, self.rho
        return np.array([[sa * sa, r * sa * sb], [r * sa * sb, sb * sb]])

    def hyper_means(self, Y):
        if self.tau is not None:
            tau = np.asarray(self.tau, dtype=float)
            if tau.shape != (2, Y.shape[1]):
                raise ValueError("tau must have shape (2, n_items)")
            return tau
        return np.vstack([np.ones(Y.shape[1]), -ndtri(clipped_rate(Y, axis=0))])


@dataclass
class AugmentedState:
    W: np.ndarray
    Z: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    M: np.ndarray
    gamma: np.ndarray

    @property
    def eta(self):
        return np.outer(self.theta, self.alpha) - self.beta[None, :]


# ---------------------------------------------------------------------------
# Full conditionals
# ---------------------------------------------------------------------------


def sample_W(Y, eta, gamma, rng):
    """Stable-region indicators given responses and the linear predictor."""
    F = ndtr(eta)
    gamma = np.asarray(gamma)[None, :]
    denom = gamma + (1.0 - gamma) * F
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(denom > 0, F / denom, 1.0)
    W = (rng.random(np.shape(eta)) < p) & (np.asarray(Y) == 1)
    return W.astype(np.int8)


_LOG_TAIL_FROM = 35.0


def _lower_truncated(a, u):
    """Standard normal conditioned on ``X >= a``, by inversion of uniform ``u``.

    With ``p = Phi(-|a|)`` (the small tail, computed accurately) the draw is
    ``Phi^-1(p + u (1 - p))`` for ``a <= 0`` and ``-Phi^-1((1 - u) p)`` for
    ``a > 0``; the latter is done in log space once ``p`` nears underflow.
    """
    a = np.asarray(a, dtype=float)
    u = np.asarray(u, dtype=float)
    p = ndtr(-np.abs(a))
    lower = a <= 0
    q = np.where(lower, p + u * (1.0 - p), (1.0 - u) * p)
    x = np.where(lower, 1.0, -1.0) * ndtri(q)
    far = a > _LOG_TAIL_FROM
    if far.any():
        x[far] = -ndtri_exp(np.log1p(-u[far]) + log_ndtr(-a[far]))
    return np.maximum(x, a)


def truncated_normal(mean, positive, rng):
    """Draw ``N(mean, 1)`` truncated to ``[0, inf)`` where ``positive`` is true
    and to ``(-inf, 0)`` elsewhere."""
    mean = np.asarray(mean, dtype=float)
    positive = np.broadcast_to(np.asarray(positive, dtype=bool), mean.shape)
    u = rng.random(mean.shape)
    # Z >= 0  <=>  X >= -mean ;  Z < 0  <=>  -X >= mean
    sign = np.where(positive, 1.0, -1.0)
    z = mean + sign * _lower_truncated(-sign * mean, u)
    # the bound at 0 is open for negative draws
    return np.where(positive, z, np.minimum(z, -np.finfo(float).tiny))


def sample_Z(W, eta, rng):
    return truncated_normal(eta, np.asarray(W) == 1, rng)


def sample_theta(Z, alpha, beta, mu, sigma2, rng):
    """Abilities from ``N((sum_j (z_ij + beta_j) alpha_j + mu/sigma2) / prec, 1/prec)``,
    ``prec = 1/sigma2 + sum_j alpha_j^2``."""
    Z = np.asarray(Z, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    prec = 1.0 / sigma2 + np.sum(alpha ** 2)
    mean = ((Z + beta[None, :]) @ alpha + mu / sigma2) / prec
    return mean + rng.standard_normal(Z.shape[0]) / np.sqrt(prec)


def item_posterior(Z, theta, Sigma_phi, M):
    """Mean (2 x m) and covariance (2 x 2) of the item-pair full conditional."""
    Z = np.asarray(Z, dtype=float)
    theta = np.asarray(theta, dtype=float)
    X = np.column_stack([theta, -np.ones_like(theta)])
    prior_prec = np.linalg.inv(Sigma_phi)
    cov = np.linalg.inv(X.T @ X + prior_prec)
    mean = cov @ (X.T @ Z + prior_prec @ np.asarray(M, dtype=float))
    return mean, cov


def sample_item_params(Z, theta, Sigma_phi, M, rng, fix_alpha=None):
    """Draw ``(alpha_j, beta_j)`` for every item (column of ``Z``).

    The pair is redrawn until ``alpha_j > 0`` (at most 100 attempts, after
    which the last draw is reflected). With ``fix_alpha`` set, alpha is held
    at that value and beta comes from its conditional given alpha.
    """
    mean, cov = item_posterior(Z, theta, Sigma_phi, M)
    m = mean.shape[1]
    if fix_alpha is not None:
        a = np.broadcast_to(np.asarray(fix_alpha, dtype=float), (m,)).copy()
        cond_mean = mean[1] + cov[1, 0] / cov[0, 0] * (a - mean[0])
        cond_sd = np.sqrt(cov[1, 1] - cov[0, 1] ** 2 / cov[0, 0])
        return a, cond_mean + cond_sd * rng.standard_normal(m)
    L = np.linalg.cholesky(cov)
    draw = mean + L @ rng.standard_normal((2, m))
    bad = np.flatnonzero(draw[0] <= 0)
    for _ in range(MAX_ALPHA_REDRAWS):
        if bad.size == 0:
            break
        draw[:, bad] = mean[:, bad] + L @ rng.standard_normal((2, bad.size))
        bad = bad[draw[0, bad] <= 0]
    if bad.size:
        draw[0, bad] = np.abs(draw[0, bad])
    return draw[0], draw[1]


def sample_M(alpha, beta, Sigma_phi, T, rng):
    """Hierarchical means: ``N((S^-1 + I)^-1 (S^-1 phi_j + T_j), (S^-1 + I)^-1)``."""
    phi = np.vstack([alpha, beta])
    prior_prec = np.linalg.inv(Sigma_phi)
    cov = np.linalg.inv(prior_prec + np.eye(2))
    mean = cov @ (prior_prec @ phi + np.asarray(T, dtype=float))
    L = np.linalg.cholesky(cov)
    return mean + L @ rng.standard_normal(mean.shape)


def gamma_counts(W, Y):
    """Per-item counts of guessed-correct and missed entries among ``W = 0``."""
    W = np.asarray(W)
    Y = np.asarray(Y)
    off = W == 0
    return np.sum(off & (Y == 1), axis=0), np.sum(off & (Y == 0), axis=0)


def sample_gamma(W, Y, s, t, rng, pooled=False):
    """Guessing parameters from their Beta full conditionals.

    ``pooled=True`` sums the counts over all items and draws one value that
    every item shares.
    """
    hits, misses = gamma_counts(W, Y)
    if pooled:
        g = rng.beta(hits.sum() + s, misses.sum() + t)
        return np.full(np.shape(Y)[1], g)
    return rng.beta(hits + s, misses + t)


# ---------------------------------------------------------------------------
# Sampler
# ---------------------------------------------------------------------------


def check_augmentation(Y, state):
    """Raise if the latent variables are inconsistent with ``Y``."""
    if np.any((state.W == 1) & (np.asarray(Y) == 0)):
        raise AssertionError("W is 1 on an incorrect response")
    if np.any((state.Z >= 0) != (state.W == 1)):
        raise AssertionError("sign of Z disagrees with W")


def gibbs_sweep(Y, state, priors, T, rng, gamma_zero=False, pooled_gamma=False,
                fix_alpha=None, Sigma_phi=None):
    """One full sweep W -> Z -> theta -> item pairs -> M -> gamma (in place)."""
    Sigma_phi = priors.sigma_phi() if Sigma_phi is None else Sigma_phi
    state.W = sample_W(Y, state.eta, state.gamma, rng)
    state.Z = sample_Z(state.W, state.eta, rng)
    state.theta = sample_theta(state.Z, state.alpha, state.beta, priors.mu, priors.sigma2, rng)
    state.alpha, state.beta = sample_item_params(state.Z, state.theta, Sigma_phi, state.M,
                                                 rng, fix_alpha)
    state.M = sample_M(state.alpha, state.beta, Sigma_phi, T, rng)
    if not gamma_zero:
        state.gamma = sample_gamma(state.W, Y, priors.s, priors.t, rng, pooled_gamma)
    return state


def initial_state(Y, T, gamma_zero=False, fix_alpha=None):
    theta, beta = probit_start(Y)
    n, m = Y.shape
    alpha = np.ones(m) if fix_alpha is None else np.broadcast_to(fix_alpha, (m,)).astype(float)
    gamma = np.zeros(m) if gamma_zero else np.full(m, 0.1)
    W = np.asarray(Y, dtype=np.int8).copy()
    Z = np.where(W == 1, 0.5, -0.5)
    return AugmentedState(W, Z, theta, alpha, beta, np.array(T, dtype=float), gamma)


def fit_gibbs(Y, priors=None, config=None, gamma_zero=False, pooled_gamma=False,
              fix_alpha=None):
    """Run the augmented Gibbs sampler and return posterior means.

    ``gamma_zero`` pins every guessing parameter at 0 (two-parameter model);
    ``pooled_gamma`` shares one guessing draw across items; ``fix_alpha``
    holds the discriminations at a constant.
    """
    Y = check_performance_matrix(Y)
    priors = priors or Model2Priors()
    config = config or GIBBS_DEFAULTS
    T = priors.hyper_means(Y)
    Sigma_phi = priors.sigma_phi()
    state = initial_state(Y, T, gamma_zero, fix_alpha)
    rng = stream(config.seed, "model2")

    n_keep = len(range(config.burn_in, config.n_iterations, config.thinning))
    draws = {
        "theta": np.empty((n_keep, Y.shape[0])),
        "alpha": np.empty((n_keep, Y.shape[1])),
        "beta": np.empty((n_keep, Y.shape[1])),
        "gamma": np.empty((n_keep, Y.shape[1])),
    }
    k = 0
    for it in range(config.n_iterations):
        gibbs_sweep(Y, state, priors, T, rng, gamma_zero, pooled_gamma, fix_alpha, Sigma_phi)
        if config.retained(it):
            for name in draws:
                draws[name][k] = getattr(state, name)
            k += 1

    means = {name: arr.mean(axis=0) for name, arr in draws.items()}
    diagnostics = {
        "n_iterations": config.n_iterations,
        "burn_in": config.burn_in,
        "thinning": config.thinning,
        "seed": config.seed,
        "gamma_zero": gamma_zero,
        "pooled_gamma": pooled_gamma,
        "guess_fraction": float(np.mean((state.W == 0) & (Y == 1))),
    }
    return FitResult(
        engine="model2",
        theta=means["theta"],
        alpha=means["alpha"],
        beta=means["beta"],
        gamma=means["gamma"],
        trace=Trace(draws, {}),
        diagnostics=diagnostics,
    )
