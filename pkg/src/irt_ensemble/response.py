"""Item response functions shared by the inference engines.

Matrices are laid out classifiers x samples: ``theta`` indexes rows,
``alpha``/``beta``/``gamma`` index columns.
"""

import numpy as np
from scipy.special import expit, log_expit, ndtr, ndtri

PROB_CLIP = 1e-12


def linear_predictor(theta, alpha, beta):
    """``eta[i, j] = alpha[j] * theta[i] - beta[j]``."""
    return np.outer(theta, alpha) - np.asarray(beta)[None, :]


def prob_1pno(theta, beta):
    """One-parameter normal ogive: ``Phi(theta_i - beta_j)``."""
    return ndtr(np.subtract.outer(theta, beta))


def prob_3pno(theta, alpha, beta, gamma):
    """``Phi(eta) + gamma (1 - Phi(eta))`` with ``eta = alpha theta - beta``."""
    F = ndtr(linear_predictor(theta, alpha, beta))
    return F + np.asarray(gamma)[None, :] * (1.0 - F)


def bernoulli_loglik(Y, P):
    """Elementwise Bernoulli log-likelihood with ``P`` clipped away from 0 and 1."""
    P = np.clip(P, PROB_CLIP, 1.0 - PROB_CLIP)
    return np.where(Y == 1, np.log(P), np.log1p(-P))


def logistic_loglik(Y, delta):
    """Elementwise log-likelihood of ``Y ~ Bernoulli(sigmoid(delta))``."""
    return np.where(Y == 1, log_expit(delta), log_expit(-delta))


def sigmoid(x):
    return expit(x)


def clipped_rate(Y, axis):
    """Row (axis=1) or column (axis=0) success rate clipped to
    ``[1/(2k), 1 - 1/(2k)]`` where ``k`` is the number of entries averaged."""
    k = Y.shape[axis]
    lo = 1.0 / (2 * k)
    return np.clip(Y.mean(axis=axis), lo, 1.0 - lo)


def probit_start(Y):
    """Starting abilities and difficulties from clipped marginal success rates."""
    theta = ndtri(clipped_rate(Y, axis=1))
    beta = -ndtri(clipped_rate(Y, axis=0))
    return theta, beta
