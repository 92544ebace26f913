"""Model 3: Bernoulli-Beta latent success probabilities fitted by generalized EM.

Each entry is ``Y_ij ~ Bernoulli(P_ij)`` with ``P_ij ~ Beta(m_ij, n_ij)``,
``m_ij = exp((theta_i - beta_j) / 2)`` and ``n_ij = 1 / m_ij`` (discriminations
are fixed at 1), so ``E[P_ij] = sigmoid(theta_i - beta_j)``. The difficulties
are identified by ``sum_j beta_j = 0``: the last free column is eliminated,
``beta_last = -sum(other free betas)``.

E-step: the posterior of ``P_ij`` is ``Beta(y + m, n - y + 1)``, giving

    SM_ij = E[ln P_ij]       = psi(y + m) - psi(m + n + 1)
    SN_ij = E[ln (1 - P_ij)] = psi(n - y + 1) - psi(m + n + 1)

M-step: one gradient-ascent step on ``Q``. The step is halved (up to 20
times) until the observed log-likelihood does not decrease.

Two forms of ``Q`` are available:

* ``"printed"``: ``sum m SM + n SN``, the expected complete-data
  log-likelihood with the Beta normalizer dropped;
* ``"complete"`` (default): the same plus ``ln Gamma(m + n) - ln Gamma(m)
  - ln Gamma(n)``. With the normalizer, the gradient of ``Q`` at the
  current point equals the gradient of the observed log-likelihood, so the
  iteration is a true (generalized) EM.

Rows or columns that are all 0 or all 1 have no finite estimate; they are
clamped to ``+-theta_cap`` and held fixed.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln, logit

from .response import clipped_rate, logistic_loglik
from .results import FitResult, check_performance_matrix
from .rng import stream
from .special import digamma

__all__ = [
    "EmConfig",
    "e_step",
    "expected_success",
    "fit_em",
    "m_step",
    "observed_loglik",
    "q_curvature",
    "q_gradients",
    "q_value",
    "shape_grid",
]

Q_FORMS = ("complete", "printed")


@dataclass(frozen=True)
class EmConfig:
    step_size: float = 0.05
    max_iterations: int = 2000
    tol: float = 1e-8
    seed: int = 0
    jitter: float = 0.0
    theta_cap: float = 10.0
    max_halvings: int = 20
    q_form: str = "complete"

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.q_form not in Q_FORMS:
            raise ValueError(f"q_form must be one of {Q_FORMS}")


def expected_success(theta, beta, alpha=1.0):
    """``E[P] = m / (m + n) = 1 / (1 + exp(-alpha theta + beta))``."""
    return expit(np.multiply(alpha, theta) - beta)


def shape_grid(theta, beta):
    """Beta shape parameters ``m = exp(delta / 2)``, ``n = exp(-delta / 2)``."""
    half = 0.5 * np.subtract.outer(np.asarray(theta, float), np.asarray(beta, float))
    return np.exp(half), np.exp(-half)


def e_step(Y, m_grid, n_grid):
    """Expected log success and failure probabilities under the Beta posterior."""
    Y = np.asarray(Y, dtype=float)
    if np.any(m_grid <= 0) or np.any(n_grid <= 0):
        raise ValueError("Beta shape parameters must be positive")
    total = digamma(m_grid + n_grid + 1.0)
    SM = digamma(Y + m_grid) - total
    SN = digamma(n_grid - Y + 1.0) - total
    return SM, SN


def observed_loglik(Y, theta, beta):
    """Marginal log-likelihood: ``Y ~ Bernoulli(sigmoid(theta - beta))``."""
    return float(np.sum(logistic_loglik(np.asarray(Y), np.subtract.outer(theta, beta))))


def _free_columns(beta, free_cols):
    if free_cols is None:
        return np.arange(len(beta))
    return np.flatnonzero(free_cols)


def _expand_beta(beta, free_cols):
    """Rebuild ``beta_last`` of the free set from the constraint."""
    beta = np.array(beta, dtype=float)
    cols = _free_columns(beta, free_cols)
    if cols.size:
        beta[cols[-1]] = -np.sum(beta[cols[:-1]])
    return beta


def q_value(theta, beta, SM, SN, form="complete", free_cols=None):
    """``Q`` as a function of theta and the free betas (all but the last free
    column, whose value is implied by the sum-to-zero constraint)."""
    beta = _expand_beta(beta, free_cols)
    m, n = shape_grid(theta, beta)
    q = np.sum(m * SM + n * SN)
    if form == "complete":
        q += np.sum(gammaln(m + n) - gammaln(m) - gammaln(n))
    elif form != "printed":
        raise ValueError(f"unknown Q form {form!r}")
    return float(q)


def _cell_gradient(m, n, SM, SN, form):
    """``dQ_ij / d(theta_i - beta_j)``."""
    g = 0.5 * (m * SM - n * SN)
    if form == "complete":
        g += 0.5 * (digamma(m + n) * (m - n) - digamma(m) * m + digamma(n) * n)
    return g


def q_gradients(theta, beta, SM, SN, form="complete", free_rows=None, free_cols=None):
    """Gradient of `q_value` under the sum-to-zero elimination.

    Returns ``(dQ_dtheta, dQ_dbeta)``, both full length. For a free column
    ``j`` other than the last free one ``L``,
    ``dQ/dbeta_j = -sum_i g_ij + sum_i g_iL`` where ``g`` is the per-entry
    derivative with respect to ``theta_i - beta_j``. Entry ``L`` holds
    ``-sum`` of the others (the move the constraint imposes on ``beta_L``),
    and clamped rows and columns get 0.
    """
    beta = _expand_beta(beta, free_cols)
    m, n = shape_grid(theta, beta)
    g = _cell_gradient(m, n, SM, SN, form)
    d_theta = g.sum(axis=1)
    if free_rows is not None:
        d_theta = np.where(free_rows, d_theta, 0.0)
    col = -g.sum(axis=0)
    d_beta = np.zeros_like(beta)
    cols = _free_columns(beta, free_cols)
    if cols.size > 1:
        last = cols[-1]
        d_beta[cols[:-1]] = col[cols[:-1]] - col[last]
        d_beta[last] = -np.sum(d_beta[cols[:-1]])
    return d_theta, d_beta


def q_curvature(theta, beta, SM, SN):
    """Second derivatives of the printed ``Q`` along theta_i and beta_j
    (diagonal only). Reported as a diagnostic; fitting does not use it."""
    m, n = shape_grid(theta, beta)
    h = 0.25 * (m * SM + n * SN)
    d2_theta = h.sum(axis=1)
    col = h.sum(axis=0)
    d2_beta = col + col[-1]
    d2_beta[-1] = np.nan
    return d2_theta, d2_beta


def _cell_loglik(Y, theta, beta):
    return logistic_loglik(Y, np.subtract.outer(theta, beta))


def m_step(Y, theta, beta, SM, SN, step, form="complete", free_rows=None,
           free_cols=None, cells=None, max_halvings=20, gradients=None):
    """One safeguarded gradient-ascent step.

    Returns ``(theta, beta, step_used, accepted)``. The free betas are
    re-centred to mean zero afterwards, and the free thetas are shifted by
    the same amount so every ``theta_i - beta_j`` among free entries is kept.
    If the observed log-likelihood decreases for ``max_halvings + 1``
    successive step sizes the inputs are returned with ``accepted=False``.
    The change is summed cell by cell, so gains far below the rounding error
    of the total are still resolved. ``cells`` (per-entry log-likelihoods at
    the current point) and ``gradients`` may be passed in precomputed.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if gradients is None:
        gradients = q_gradients(theta, beta, SM, SN, form, free_rows, free_cols)
    d_theta, d_beta = gradients
    Y = np.asarray(Y)
    if cells is None:
        cells = _cell_loglik(Y, theta, beta)
    if not (np.any(d_theta) or np.any(d_beta)):
        return theta, beta, step, True
    cols = _free_columns(beta, free_cols)
    rows = np.ones(len(theta), bool) if free_rows is None else np.asarray(free_rows)
    for _ in range(max_halvings + 1):
        new_theta = theta + step * d_theta
        new_beta = beta + step * d_beta
        if cols.size:
            shift = new_beta[cols].mean()
            new_beta[cols] -= shift
            new_theta = np.where(rows, new_theta - shift, new_theta)
        if np.sum(_cell_loglik(Y, new_theta, new_beta) - cells) >= 0:
            return new_theta, new_beta, step, True
        step *= 0.5
    return theta, beta, step, False


def _separated(Y, cap):
    """Clamp values for constant rows and columns (NaN where free)."""
    row_mean = Y.mean(axis=1)
    col_mean = Y.mean(axis=0)
    theta_fix = np.where(row_mean == 1, cap, np.where(row_mean == 0, -cap, np.nan))
    beta_fix = np.where(col_mean == 1, -cap, np.where(col_mean == 0, cap, np.nan))
    return theta_fix, beta_fix


def initial_values(Y, config=None):
    """Logit starting values from clipped marginal rates, free betas centred."""
    config = config or EmConfig()
    theta = logit(clipped_rate(Y, axis=1))
    beta = -logit(clipped_rate(Y, axis=0))
    if config.jitter > 0:
        rng = stream(config.seed, "model3-init")
        theta = theta + config.jitter * rng.standard_normal(theta.shape)
        beta = beta + config.jitter * rng.standard_normal(beta.shape)
    return theta, beta


def fit_em(Y, config=None, init_theta=None, init_beta=None):
    """Fit abilities and difficulties by generalized EM.

    Stops when the observed log-likelihood gains less than ``tol`` in an
    iteration, when no step size improves it, or after ``max_iterations``.
    Each iteration starts from twice the previously accepted step, capped
    at ``step_size``. ``history`` records one entry per accepted iteration.
    """
    Y = check_performance_matrix(Y)
    config = config or EmConfig()
    theta_fix, beta_fix = _separated(Y, config.theta_cap)
    free_rows = np.isnan(theta_fix)
    free_cols = np.isnan(beta_fix)

    theta0, beta0 = initial_values(Y, config)
    theta = np.array(theta0 if init_theta is None else init_theta, dtype=float)
    beta = np.array(beta0 if init_beta is None else init_beta, dtype=float)
    if free_cols.any():
        shift = beta[free_cols].mean()
        beta[free_cols] -= shift
        theta[free_rows] -= shift
    theta = np.where(free_rows, theta, theta_fix)
    beta = np.where(free_cols, beta, beta_fix)

    cells = _cell_loglik(Y, theta, beta)
    ll = float(np.sum(cells))
    history = [{"iteration": 0, "log_likelihood": ll, "gradient_norm": float("nan"),
                "step_size": 0.0}]
    step = config.step_size
    converged = False
    reason = "max_iterations"
    for it in range(1, config.max_iterations + 1):
        m, n = shape_grid(theta, beta)
        SM, SN = e_step(Y, m, n)
        d_theta, d_beta = q_gradients(theta, beta, SM, SN, config.q_form, free_rows, free_cols)
        grad_norm = float(np.sqrt(np.sum(d_theta ** 2) + np.sum(d_beta ** 2)))
        theta_new, beta_new, used, ok = m_step(
            Y, theta, beta, SM, SN, min(config.step_size, 2.0 * step), config.q_form,
            free_rows, free_cols, cells, config.max_halvings, (d_theta, d_beta),
        )
        if not ok:
            converged, reason = True, "no_improving_step"
            break
        cells_new = _cell_loglik(Y, theta_new, beta_new)
        gain = float(np.sum(cells_new - cells))
        ll_new = float(np.sum(cells_new))
        history.append({"iteration": it, "log_likelihood": ll_new,
                        "gradient_norm": grad_norm, "step_size": used})
        theta, beta, ll, cells, step = theta_new, beta_new, ll_new, cells_new, used
        if gain < config.tol:
            converged, reason = True, "tolerance"
            break

    diagnostics = {
        "converged": converged,
        "stop_reason": reason,
        "n_iterations": len(history) - 1,
        "log_likelihood": ll,
        "q_form": config.q_form,
        "clamped_rows": np.flatnonzero(~free_rows).tolist(),
        "clamped_columns": np.flatnonzero(~free_cols).tolist(),
        "theta_cap": config.theta_cap,
    }
    return FitResult(
        engine="model3",
        theta=theta,
        alpha=np.ones(Y.shape[1]),
        beta=beta,
        gamma=np.zeros(Y.shape[1]),
        history=history,
        diagnostics=diagnostics,
    )
