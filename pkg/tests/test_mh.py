import numpy as np
import pytest
from scipy.stats import norm, t as student_t

from irt_ensemble.data import simulate_responses
from irt_ensemble.mh import (
    Model1Priors,
    Model1State,
    fit_mh,
    initial_state,
    log_posterior,
    loglik_3pno,
    mh_step,
)
from irt_ensemble.results import McmcConfig
from irt_ensemble.rng import stream

Y22 = np.array([[1, 0], [1, 1]])
ALPHA = np.array([1.2, 0.8])
BETA = np.array([-0.3, 0.6])
GAMMA = np.array([0.1, 0.2])


def scalar_loglik(Y, theta, alpha, beta, gamma):
    total = 0.0
    for i in range(Y.shape[0]):
        for j in range(Y.shape[1]):
            F = norm.cdf(alpha[j] * theta[i] - beta[j])
            p = F + gamma[j] * (1 - F)
            total += np.log(p) if Y[i, j] else np.log(1 - p)
    return total


def grid_posterior(y_row, log_prior, grid):
    logpost = log_prior(grid) + np.array(
        [scalar_loglik(y_row[None, :], [g], ALPHA, BETA, GAMMA) for g in grid]
    )
    w = np.exp(logpost - logpost.max())
    return w / w.sum()


def batch_se(x, n_batches=50):
    b = np.array_split(x, n_batches)
    return np.std([v.mean() for v in b], ddof=1) / np.sqrt(n_batches)


class TestLoglik:
    def test_half(self):
        assert loglik_3pno([[1]], [0.0], [1.0], [0.0], [0.0]) == pytest.approx(np.log(0.5))

    def test_guessing_plug_in(self):
        assert loglik_3pno([[1]], [0.0], [1.0], [0.0], [0.2]) == pytest.approx(np.log(0.6))

    def test_product_of_bernoullis(self):
        theta = np.array([0.4, -1.1])
        np.testing.assert_allclose(loglik_3pno(Y22, theta, ALPHA, BETA, GAMMA),
                                   scalar_loglik(Y22, theta, ALPHA, BETA, GAMMA), rtol=1e-12)

    def test_reduces_to_1pno(self):
        rng = np.random.default_rng(0)
        Y = rng.integers(0, 2, (6, 5))
        theta, beta = rng.normal(size=6), rng.normal(size=5)
        F = norm.cdf(np.subtract.outer(theta, beta))
        direct = np.sum(Y * np.log(F) + (1 - Y) * np.log(1 - F))
        assert abs(loglik_3pno(Y, theta, np.ones(5), beta, np.zeros(5)) - direct) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            loglik_3pno(Y22, [0.0], ALPHA, BETA, GAMMA)


class TestStep:
    def state(self):
        return Model1State(np.array([0.2, -0.1]), ALPHA.copy(), BETA.copy(), GAMMA.copy(),
                           np.ones(2))

    @pytest.mark.parametrize("block", ["theta", "alpha", "beta", "gamma"])
    def test_null_proposal_accepted(self, block):
        s = self.state()
        new, acc, _ = mh_step(Y22, s, block, stream(0, "t"), step=1e-300)
        assert acc.all()

    def test_out_of_range_gamma_rejected(self):
        # a gamma of exactly 0 is a boundary point; its logit is -inf and every
        # proposal maps back to 0, which the guard treats as a null move.
        s = self.state()
        s = Model1State(s.theta, s.alpha, s.beta, np.array([0.999999, 0.5]), s.sigma2)
        new, acc, _ = mh_step(Y22, s, "gamma", stream(3, "t"), step=50.0)
        assert np.all((new.gamma >= 0) & (new.gamma < 1))

    def test_sigma_direct_draw(self):
        rng = stream(1, "sigma")
        priors = Model1Priors()
        s = Model1State(np.array([1.5]), np.ones(1), np.zeros(1), np.zeros(1), np.ones(1))
        draws = np.array([mh_step(np.ones((1, 1)), s, "sigma", rng, priors)[0].sigma2[0]
                          for _ in range(20000)])
        # InvGamma(a + 1/2, b + theta^2 / 2) mean = rate / (shape - 1)
        mean = (1 + 1.5 ** 2 / 2) / (2.5 - 1)
        assert abs(draws.mean() - mean) < 3 * draws.std() / np.sqrt(draws.size) * 2

    def test_unknown_block(self):
        with pytest.raises(ValueError):
            mh_step(Y22, self.state(), "delta", stream(0))

    def test_invalid_state_has_zero_density(self):
        s = self.state()
        bad = Model1State(s.theta, -s.alpha, s.beta, s.gamma, s.sigma2)
        assert log_posterior(Y22, bad) == -np.inf


class TestGridOracle:
    def test_theta_mean_hierarchical(self):
        # with sigma2 ~ InvGamma(2, 1) integrated out, theta has a Student-t
        # prior with 4 degrees of freedom and scale sqrt(1/2)
        init = Model1State(np.zeros(2), ALPHA.copy(), BETA.copy(), GAMMA.copy(), np.ones(2))
        cfg = McmcConfig(n_iterations=40000, burn_in=2000, step_sizes={"theta": 1.5}, seed=5)
        res = fit_mh(Y22, config=cfg, init=init, update=("theta", "sigma"))
        grid = np.arange(-6, 6 + 1e-9, 0.01)
        prior = lambda g: student_t.logpdf(g, df=4, scale=np.sqrt(0.5))  # noqa: E731
        for i in range(2):
            p = grid_posterior(Y22[i], prior, grid)
            draws = res.trace.samples["theta"][:, i]
            assert abs(draws.mean() - np.sum(p * grid)) < 3 * batch_se(draws)

    def test_ks_single_parameter(self):
        y = np.array([[1, 0]])
        init = Model1State(np.zeros(1), ALPHA.copy(), BETA.copy(), GAMMA.copy(), np.ones(1))
        cfg = McmcConfig(n_iterations=52000, burn_in=2000, step_sizes={"theta": 2.0}, seed=8)
        res = fit_mh(y, config=cfg, init=init, update=("theta",))
        draws = np.sort(res.trace.samples["theta"][:, 0])
        assert draws.size == 50000
        grid = np.arange(-6, 6 + 1e-9, 0.01)
        cdf = np.cumsum(grid_posterior(y[0], norm.logpdf, grid))
        ecdf = np.searchsorted(draws, grid, side="right") / draws.size
        assert np.max(np.abs(ecdf - cdf)) < 0.05


class TestFit:
    def test_all_ones_push_theta_up(self):
        # neutral start: the probit start already places theta above zero
        Y = np.ones((4, 6), dtype=int)
        init = Model1State(np.zeros(4), np.ones(6), np.zeros(6), np.full(6, 0.1), np.ones(4))
        res = fit_mh(Y, config=McmcConfig(600, 200, seed=1), init=init)
        assert np.all(res.theta > init.theta)
        assert np.all(initial_state(Y).theta > 0)

    def test_deterministic(self):
        Y = np.random.default_rng(0).integers(0, 2, (8, 5))
        a = fit_mh(Y, config=McmcConfig(120, 20, seed=4))
        b = fit_mh(Y, config=McmcConfig(120, 20, seed=4))
        for name in a.trace.samples:
            np.testing.assert_array_equal(a.trace.samples[name], b.trace.samples[name])

    def test_acceptance_and_posterior_gain(self):
        rng = np.random.default_rng(1)
        theta = rng.standard_normal(200)
        beta = rng.standard_normal(10)
        alpha = np.clip(rng.normal(1, 0.2, 10), 0.2, None)
        Y = simulate_responses(theta, alpha, beta, np.zeros(10), seed=2).matrix
        res = fit_mh(Y, config=McmcConfig(1500, 500, seed=3))
        for block, rate in res.trace.acceptance.items():
            assert 0.05 < rate < 0.95, block
        d = res.diagnostics
        assert d["log_posterior_estimate"] >= d["log_posterior_initial"]
        assert np.corrcoef(res.beta, beta)[0, 1] > 0.9

    def test_trace_export(self, tmp_path):
        Y = np.random.default_rng(0).integers(0, 2, (3, 4))
        res = fit_mh(Y, config=McmcConfig(30, 10, seed=0))
        path = tmp_path / "trace.csv"
        res.trace.to_csv(path)
        lines = path.read_text().splitlines()
        assert len(lines) == 21
        assert lines[0].split(",")[0] == "alpha[0]"

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            McmcConfig(100, 100)
        with pytest.raises(ValueError):
            McmcConfig(100, 10, step_sizes={"theta": 0.0})
        with pytest.raises(ValueError):
            Model1Priors(sigma_a=0.0)
