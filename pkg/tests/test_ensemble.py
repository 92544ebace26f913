import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irt_ensemble.data import gen_checkerboard, load_bundled
from irt_ensemble.ensemble import (
    AbilityVector,
    IrtEnsembleModel,
    PerformanceMatrix,
    build_performance_matrix,
    compute_weights,
    dumps_bundle,
    fit_irt_ensemble,
    load_bundle,
    majority_vote,
    predict_batch,
    predict_weighted,
    save_bundle,
    vote,
)
from irt_ensemble.results import McmcConfig
from irt_ensemble.tree import BasePool, Tree, fit_base_pool, fit_tree

from conftest import make_dataset

finite_thetas = st.lists(st.floats(-50, 50), min_size=1, max_size=30)


def leaf(cls, n_classes=3, n_features=1):
    counts = [0] * n_classes
    counts[cls] = 1
    return Tree([-1], [0.0], [-1], [-1], [counts], n_features)


def pool_of(trees):
    return BasePool(list(trees), list(range(len(trees))), {})


def model_of(trees, theta):
    return IrtEnsembleModel(pool_of(trees), AbilityVector.from_theta(theta), {}, "model2")


class TestPerformanceMatrix:
    def test_pure_tree_on_training_data(self):
        d = gen_checkerboard(4, 200, seed=0)
        pool = pool_of([fit_tree(d)])
        np.testing.assert_array_equal(np.asarray(build_performance_matrix(pool, d)),
                                      np.ones((1, 200)))

    def test_constant_leaf(self):
        d = make_dataset([0.0, 1.0, 2.0], [0, 1, 1])
        Y = build_performance_matrix(pool_of([leaf(0, 2)]), d)
        np.testing.assert_array_equal(Y.entries, [[1, 0, 0]])

    def test_row_means_are_tree_accuracies(self):
        d = load_bundled("iris")
        pool = fit_base_pool(d, 8, seed=3)
        Y = np.asarray(build_performance_matrix(pool, d))
        expected = [np.mean(t.predict(d.features) == d.labels) for t in pool.trees]
        np.testing.assert_allclose(Y.mean(axis=1), expected)

    def test_arity_mismatch(self):
        d = make_dataset(np.zeros((3, 2)), [0, 1, 0])
        with pytest.raises(ValueError):
            build_performance_matrix(pool_of([leaf(0, 2)]), d)

    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            PerformanceMatrix(np.array([[0, 2]]))


class TestWeights:
    def test_uniform(self):
        np.testing.assert_allclose(compute_weights([1.3] * 4), [0.25] * 4, atol=1e-15)

    def test_closed_form(self):
        np.testing.assert_allclose(compute_weights([0.0, np.log(2.0)]), [1 / 3, 2 / 3],
                                   rtol=1e-14)

    def test_no_overflow(self):
        w = compute_weights([1000.0, 999.0])
        assert np.all(np.isfinite(w))
        np.testing.assert_allclose(w[0] / w[1], np.e)

    @pytest.mark.parametrize("bad", [[0.0, np.nan], [np.inf, 0.0], []])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            compute_weights(bad)

    @settings(max_examples=60, deadline=None)
    @given(finite_thetas, st.floats(-20, 20))
    def test_properties(self, theta, shift):
        theta = np.asarray(theta)
        w = compute_weights(theta)
        assert np.all(w > 0)
        assert abs(w.sum() - 1) < 1e-12
        np.testing.assert_allclose(compute_weights(theta + shift), w, rtol=1e-9, atol=1e-300)
        for i in range(theta.size):
            for k in range(theta.size):
                if theta[i] > theta[k] + 1e-9:
                    assert w[i] >= w[k]

    def test_strict_order(self):
        theta = np.array([-1.0, 0.5, 0.2, 3.0])
        w = compute_weights(theta)
        assert np.all(np.argsort(w) == np.argsort(theta))


class TestVoting:
    def test_unanimous(self):
        m = model_of([leaf(2), leaf(2), leaf(2)], [0.1, -3.0, 2.0])
        assert predict_weighted(m, [0.7]) == 2

    def test_dominant_weight(self):
        w = np.array([0.6, 0.4])
        m = model_of([leaf(0, 2), leaf(1, 2)], np.log(w))
        assert predict_weighted(m, [0.0]) == 0

    def test_tie_to_lowest_class(self):
        assert vote([[1], [0]], [0.5, 0.5], 2)[0] == 0
        assert majority_vote([[2], [1]], 3)[0] == 1

    def test_uniform_weights_equal_majority(self):
        d = gen_checkerboard(4, 300, seed=2)
        pool = fit_base_pool(d, 41, seed=5)
        g = np.linspace(0, 1, 32)
        grid = np.array([(a, b) for a in g for b in g])
        preds = pool.predict_all(grid)
        for n in (1, 2, 3, 7, 10, 41):
            np.testing.assert_array_equal(
                vote(preds[:n], np.full(n, 1.0 / n), 2), majority_vote(preds[:n], 2)
            )

    def test_single_tree(self):
        d = load_bundled("iris")
        t = fit_tree(d)
        m = model_of([t], [4.2])
        pred, _ = predict_batch(m, d)
        np.testing.assert_array_equal(pred, t.predict(d.features))

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.floats(-3, 3), min_size=6, max_size=6), st.floats(-10, 10))
    def test_shift_invariance(self, theta, c):
        d = gen_checkerboard(2, 60, seed=1)
        pool = fit_base_pool(d, 6, seed=2)
        X = np.random.default_rng(0).random((50, 2))
        preds = pool.predict_all(X)
        np.testing.assert_array_equal(vote(preds, compute_weights(theta), 2),
                                      vote(preds, compute_weights(np.add(theta, c)), 2))

    def test_zero_influence_tree_removal(self):
        d = gen_checkerboard(4, 200, seed=4)
        pool = fit_base_pool(d, 9, seed=6)
        theta = np.random.default_rng(1).normal(size=9)
        theta[4] = -60.0
        w = compute_weights(theta)
        assert w[4] < 1e-15
        X = np.random.default_rng(2).random((400, 2))
        preds = pool.predict_all(X)
        keep = np.arange(9) != 4
        np.testing.assert_array_equal(vote(preds, w, 2),
                                      vote(preds[keep], compute_weights(theta[keep]), 2))

    def test_arity_mismatch(self):
        m = model_of([leaf(0)], [0.0])
        with pytest.raises(ValueError):
            predict_weighted(m, [0.0, 1.0])


class TestBatch:
    def test_empty(self):
        m = model_of([leaf(0, 2)], [0.0])
        d = make_dataset(np.empty((0, 1)), np.empty(0, dtype=int), n_classes=2)
        with pytest.raises(ValueError):
            predict_batch(m, d)

    def test_pure_pool_on_training_set(self):
        d = gen_checkerboard(4, 200, seed=0)
        t = fit_tree(d)
        _, acc = predict_batch(model_of([t, t, t], [0.0, 1.0, 2.0]), d)
        assert acc == 1.0

    def test_accuracy_equals_pointwise(self):
        d = load_bundled("iris")
        pool = fit_base_pool(d, 7, seed=1)
        m = model_of(pool.trees, np.linspace(-1, 1, 7))
        pred, acc = predict_batch(m, d)
        pointwise = [predict_weighted(m, x) for x in d.features]
        np.testing.assert_array_equal(pred, pointwise)
        assert acc == np.mean(np.array(pointwise) == d.labels)


@pytest.fixture(scope="module")
def fitted():
    d = load_bundled("iris")
    model, result, Y = fit_irt_ensemble(d, n_trees=15, engine="model2",
                                        engine_config=McmcConfig(200, 50, seed=1), seed=3)
    return d, model, result, Y


class TestFitAndBundle:
    def test_shapes(self, fitted):
        d, model, result, Y = fitted
        assert np.asarray(Y).shape == (15, d.n_samples)
        assert model.abilities.theta.size == 15
        assert model.item_params["beta"].size == d.n_samples
        np.testing.assert_allclose(model.weights.sum(), 1.0, atol=1e-12)

    def test_bundle_roundtrip(self, fitted, tmp_path):
        d, model, _, _ = fitted
        path = tmp_path / "m.json"
        save_bundle(model, path)
        again = load_bundle(path)
        np.testing.assert_array_equal(predict_batch(again, d)[0], predict_batch(model, d)[0])
        assert dumps_bundle(again) == path.read_text()

    def test_bundle_deterministic(self, fitted):
        d, model, _, _ = fitted
        other, _, _ = fit_irt_ensemble(d, n_trees=15, engine="model2",
                                       engine_config=McmcConfig(200, 50, seed=1), seed=3)
        assert dumps_bundle(other) == dumps_bundle(model)

    def test_bad_version(self, fitted, tmp_path):
        path = tmp_path / "m.json"
        save_bundle(fitted[1], path)
        path.write_text(path.read_text().replace('"version":1', '"version":99'))
        with pytest.raises(ValueError, match="version"):
            load_bundle(path)

    def test_pool_size_must_match(self):
        with pytest.raises(ValueError):
            model_of([leaf(0)], [0.0, 1.0])
