import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from irt_ensemble.data import gen_checkerboard, load_bundled
from irt_ensemble.ensemble import fit_irt_ensemble
from irt_ensemble.evaluation import (
    build_win_table,
    boundary_distance,
    correlation,
    difficulty_report,
    error_ratio,
    mae,
    mse,
    run_accuracy_experiment,
    run_recovery,
    variance_ratio,
)
from irt_ensemble.results import McmcConfig

finite = st.floats(-100, 100, allow_nan=False)


class TestMetrics:
    def test_examples(self):
        t = np.array([0.3, -1.2, 2.5, 0.0])
        assert correlation(t, t) == pytest.approx(1.0)
        assert correlation(-t, t) == pytest.approx(-1.0)
        assert correlation([1, 2, 3], [1, 2, 4]) == pytest.approx(0.98198, abs=1e-5)
        assert mse(t, t) == 0 and mae(t, t) == 0 and variance_ratio(t, t) == 1
        assert mse(t + 1, t) == pytest.approx(1) and mae(t + 1, t) == pytest.approx(1)
        assert variance_ratio(t + 1, t) == pytest.approx(1)
        assert variance_ratio(2 * t, t) == pytest.approx(4)

    def test_undefined(self):
        assert math.isnan(correlation([1, 1, 1], [1, 2, 3]))
        assert math.isnan(variance_ratio([1, 2, 3], [5, 5, 5]))

    def test_errors(self):
        with pytest.raises(ValueError):
            mse([1, 2], [1, 2, 3])
        with pytest.raises(ValueError):
            correlation([1], [1])

    @given(arrays(float, 8, elements=finite), arrays(float, 8, elements=finite),
           st.floats(0.1, 10), st.floats(-10, 10))
    def test_affine_laws(self, e, t, a, b):
        r = correlation(e, t)
        if not math.isnan(r):
            assert -1 <= r <= 1
            r2 = correlation(a * e + b, t)
            if not math.isnan(r2):
                assert r2 == pytest.approx(r, abs=1e-6)
        assert mse(e, t) >= 0 and mae(e, t) >= 0
        v = variance_ratio(e, t)
        if not math.isnan(v) and np.var(e) > 1e-6:
            assert variance_ratio(a * e, t) == pytest.approx(a * a * v, rel=1e-6)


class TestErrorRatio:
    def test_identical_models(self):
        rng = np.random.default_rng(0)
        t = rng.normal(size=10)
        e = t + rng.normal(size=10)
        r = error_ratio({"a": e, "b": e, "c": e}, t)
        own = (e - t) ** 2 / np.mean((e - t) ** 2)
        for v in r.values():
            np.testing.assert_allclose(v, own, rtol=1e-12)
            assert v.mean() == pytest.approx(1.0)

    def test_exact_model_zero(self):
        t = np.arange(5.0)
        r = error_ratio({"exact": t, "off": t + 1}, t)
        np.testing.assert_array_equal(r["exact"], 0.0)

    def test_independent_recomputation(self):
        rng = np.random.default_rng(1)
        t = rng.normal(size=7)
        ests = {k: t + rng.normal(size=7) for k in "xyz"}
        r = error_ratio(ests, t)
        avg = sum(sum((ests[k][i] - t[i]) ** 2 for i in range(7)) / 7 for k in "xyz") / 3
        for k in "xyz":
            for i in range(7):
                assert abs(r[k][i] - (ests[k][i] - t[i]) ** 2 / avg) < 1e-12

    def test_all_exact_is_undefined(self):
        t = np.arange(3.0)
        assert np.all(np.isnan(error_ratio({"a": t}, t)["a"]))

    def test_empty(self):
        with pytest.raises(ValueError):
            error_ratio({}, [1.0])


def tally(acc):
    """Plain-loop recount of the >= win matrix."""
    datasets, methods = acc.shape
    out = np.zeros((methods, methods), dtype=int)
    for i, j in itertools.product(range(methods), repeat=2):
        if i != j:
            out[i, j] = sum(1 for d in range(datasets) if acc[d, i] >= acc[d, j])
    return out


class TestWinTable:
    def test_three_of_five(self):
        res = {f"d{k}": {"A": a, "B": 0.5} for k, a in enumerate([0.6, 0.7, 0.8, 0.4, 0.3])}
        t = build_win_table(res)
        assert t.counts[0, 1] == 3 and t.counts[1, 0] == 2
        assert t.goal_difference[0] == 1 and t.goal_difference[1] == -1

    def test_all_ties(self):
        res = {f"d{k}": {"A": 0.5, "B": 0.5, "C": 0.5} for k in range(4)}
        t = build_win_table(res)
        off = ~np.eye(3, dtype=bool)
        assert np.all(t.counts[off] == 4) and np.all(np.diag(t.counts) == 0)
        np.testing.assert_array_equal(t.goal_difference, 0)

    @given(arrays(float, (6, 4), elements=st.sampled_from([0.5, 0.6, 0.7, 0.8])))
    def test_tally_oracle(self, acc):
        res = {f"d{d}": {f"m{k}": acc[d, k] for k in range(4)} for d in range(6)}
        t = build_win_table(res)
        expected = tally(acc)
        np.testing.assert_array_equal(t.counts, expected)
        np.testing.assert_array_equal(t.goal_difference, t.wins - t.losses)
        assert t.wins.sum() + t.losses.sum() == 2 * expected.sum()

    def test_missing_cell(self):
        with pytest.raises(ValueError):
            build_win_table({"a": {"x": 1.0, "y": 0.5}, "b": {"x": 1.0}})


class TestRecovery:
    def test_deterministic_and_shaped(self):
        cfg = {"model2": McmcConfig(60, 20, seed=1)}
        a = run_recovery("normal", ["model2", "model3"], cfg, seed=3, n_classifiers=60)
        b = run_recovery("normal", ["model2", "model3"], cfg, seed=3, n_classifiers=60)
        for e in ("model2", "model3"):
            np.testing.assert_array_equal(a[e].estimates["beta"], b[e].estimates["beta"])
            assert len(a[e].rows()) == 2
            assert a[e].error_ratios["theta"].shape == (60,)
            m = a[e].metrics["beta"]
            assert -1 <= m["correlation"] <= 1 and m["variance_ratio"] > 0

    def test_model3_gauge_alignment(self):
        r = run_recovery("normal", ["model3"], seed=2, n_classifiers=80)["model3"]
        np.testing.assert_allclose(r.estimates["beta"].mean(), r.truth["beta"].mean())

    def test_unknown(self):
        with pytest.raises(ValueError):
            run_recovery("tall", ["model3"])
        with pytest.raises(ValueError):
            run_recovery("normal", [])


class TestAccuracyExperiment:
    def test_uniform_equals_majority(self):
        d = gen_checkerboard(2, 150, 0)
        res = run_accuracy_experiment(d, ["irt-uniform", "bagging-majority", "tree"],
                                      n_trees=9, repetitions=3, seed=1)
        np.testing.assert_array_equal(res.accuracies[:, 0], res.accuracies[:, 1])
        assert res.accuracies.shape == (3, 3)
        assert set(res.mean) == {"irt-uniform", "bagging-majority", "tree"}

    def test_engine_runs(self):
        d = load_bundled("iris")
        res = run_accuracy_experiment(d, ["irt-model3", "irt-model2"], n_trees=10,
                                      repetitions=2, seed=0,
                                      engine_configs={"model2": McmcConfig(60, 20)})
        assert np.all((res.accuracies > 0.6) & (res.accuracies <= 1))

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            run_accuracy_experiment(gen_checkerboard(2, 50, 0), ["svm"])


class TestDifficulty:
    def test_boundary_distance(self):
        X = np.array([[0.5, 0.1], [0.3, 0.2], [0.05, 0.95]])
        np.testing.assert_allclose(boundary_distance(X, 2), [0.0, 0.2, 0.45])
        np.testing.assert_allclose(boundary_distance(X, 4), [0.0, 0.05, 0.2])

    def test_report_rows_and_constant_beta(self):
        d = gen_checkerboard(2, 60, 1)
        model, _, _ = fit_irt_ensemble(d, n_trees=5, engine="model3")
        rep = difficulty_report(model, d, cells_per_side=2)
        assert len(rep.rows) == 60
        assert rep.columns[0] == "sample_id" and rep.columns[-1] == "beta_estimate"
        flat = type(model)(model.pool, model.abilities, {"beta": np.zeros(60)},
                           model.engine, model.preprocessor)
        assert math.isnan(difficulty_report(flat, d, 2).boundary_correlation)
        with pytest.raises(ValueError):
            difficulty_report(model, gen_checkerboard(2, 10, 0))
