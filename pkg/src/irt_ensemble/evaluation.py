"""Recovery metrics, accuracy experiments, win tables and difficulty reports.

Undefined statistics (zero variance, empty averages) are reported as NaN.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .data import Preprocessor, simulate_responses, train_test_split
from .ensemble import (AbilityVector, IrtEnsembleModel, fit_engine, fit_irt_ensemble,
                       majority_vote, predict_batch)
from .rng import derive_seed, stream
from .tree import TreeConfig, fit_base_pool, fit_tree

__all__ = [
    "AccuracyResult",
    "DifficultyReport",
    "RecoveryReport",
    "WinTable",
    "boundary_correlation",
    "boundary_distance",
    "build_win_table",
    "correlation",
    "difficulty_report",
    "error_ratio",
    "mae",
    "mse",
    "run_accuracy_experiment",
    "run_recovery",
    "simulate_setting",
    "variance_ratio",
]

UNDEFINED = float("nan")
METHODS = ("irt-model1", "irt-model2", "irt-model3", "irt-uniform", "tree", "bagging-majority")
SETTINGS = ("normal", "wide")


def _pair(est, truth):
    est = np.asarray(est, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if est.shape != truth.shape:
        raise ValueError(f"length mismatch: {est.size} estimates for {truth.size} values")
    if est.size == 0:
        raise ValueError("empty vectors")
    return est, truth


def correlation(est, truth):
    """Pearson correlation; NaN when either vector is constant."""
    est, truth = _pair(est, truth)
    if est.size < 2:
        raise ValueError("correlation needs at least two values")
    de = est - est.mean()
    dt = truth - truth.mean()
    denom = np.sqrt(np.sum(de * de) * np.sum(dt * dt))
    if denom == 0:
        return UNDEFINED
    return float(np.clip(np.sum(de * dt) / denom, -1.0, 1.0))


def mse(est, truth):
    est, truth = _pair(est, truth)
    return float(np.mean((est - truth) ** 2))


def mae(est, truth):
    est, truth = _pair(est, truth)
    return float(np.mean(np.abs(est - truth)))


def variance_ratio(est, truth):
    """``var(est) / var(truth)``; NaN when the truth is constant."""
    est, truth = _pair(est, truth)
    vt = np.var(truth)
    if vt == 0:
        return UNDEFINED
    return float(np.var(est) / vt)


def error_ratio(est_by_model, truth):
    """Squared error per component divided by the MSE averaged over models.

    Returns a dict with the same keys as ``est_by_model``. Every ratio is NaN
    when all models are exact.
    """
    if not est_by_model:
        raise ValueError("at least one model is required")
    truth = np.asarray(truth, dtype=float)
    sq = {k: (_pair(v, truth)[0] - truth) ** 2 for k, v in est_by_model.items()}
    avg = float(np.mean([s.mean() for s in sq.values()]))
    if avg == 0:
        return {k: np.full(truth.size, UNDEFINED) for k in sq}
    return {k: s / avg for k, s in sq.items()}


# ---------------------------------------------------------------------------
# Parameter recovery
# ---------------------------------------------------------------------------


def simulate_setting(setting, seed=0, n_classifiers=1000, n_samples=10):
    """Draw true parameters and responses for a recovery experiment.

    ``normal``: theta, beta ~ N(0, 1), alpha ~ N(1, 0.2) floored at 0.2,
    no guessing, probit link. ``wide``: theta ~ Gamma(2, scale 2) - 4 (skewed,
    mean zero), beta ~ U(-10, 12), alpha = 1, no guessing, logistic link.
    """
    rng = stream(seed, "recovery", setting)
    if setting == "normal":
        theta = rng.standard_normal(n_classifiers)
        beta = rng.standard_normal(n_samples)
        alpha = np.maximum(rng.normal(1.0, 0.2, n_samples), 0.2)
        link = "probit"
    elif setting == "wide":
        theta = rng.gamma(2.0, 2.0, n_classifiers) - 4.0
        beta = rng.uniform(-10.0, 12.0, n_samples)
        alpha = np.ones(n_samples)
        link = "logit"
    else:
        raise ValueError(f"unknown setting {setting!r}; expected one of {SETTINGS}")
    return simulate_responses(theta, alpha, beta, np.zeros(n_samples), link=link,
                              seed=derive_seed(seed, "recovery-responses", setting))


def align(result, truth_beta):
    """Move estimates into the gauge of the truth before scoring.

    Estimated difficulties are shifted to the true mean. For the EM engine,
    whose location is fixed only by the sum-to-zero constraint, the
    abilities receive the same shift.
    """
    shift = float(np.mean(truth_beta) - np.mean(result.beta))
    beta = result.beta + shift
    theta = result.theta + shift if result.engine == "model3" else np.array(result.theta)
    return theta, beta


def _metrics(est, truth):
    return {
        "correlation": correlation(est, truth),
        "mse": mse(est, truth),
        "mae": mae(est, truth),
        "variance_ratio": variance_ratio(est, truth),
    }


@dataclass
class RecoveryReport:
    engine: str
    setting: str
    seed: int
    metrics: dict
    estimates: dict
    truth: dict
    error_ratios: dict = field(default_factory=dict)

    def rows(self):
        """One row per parameter family: engine, family, then the four metrics."""
        return [
            {"setting": self.setting, "engine": self.engine, "parameter": fam, **vals}
            for fam, vals in self.metrics.items()
        ]


def run_recovery(setting, engines, configs=None, seed=0, n_classifiers=1000, n_samples=10,
                 gamma_zero=False):
    """Simulate one setting, fit every engine, and score theta and beta.

    ``configs`` maps engine names to engine configurations. Error ratios are
    computed across the engines supplied.
    """
    engines = list(engines)
    if not engines:
        raise ValueError("at least one engine is required")
    configs = configs or {}
    sim = simulate_setting(setting, seed, n_classifiers, n_samples)
    truth = {"theta": sim.true_theta, "beta": sim.true_beta}
    reports = {}
    for engine in engines:
        res = fit_engine(sim.matrix, engine, configs.get(engine), gamma_zero=gamma_zero)
        theta, beta = align(res, sim.true_beta)
        est = {"theta": theta, "beta": beta}
        reports[engine] = RecoveryReport(
            engine, setting, seed,
            {fam: _metrics(est[fam], truth[fam]) for fam in ("theta", "beta")},
            est, truth,
        )
    for fam in ("theta", "beta"):
        ratios = error_ratio({e: r.estimates[fam] for e, r in reports.items()}, truth[fam])
        for e, r in reports.items():
            r.error_ratios[fam] = ratios[e]
    return reports


# ---------------------------------------------------------------------------
# Classification experiments
# ---------------------------------------------------------------------------


@dataclass
class AccuracyResult:
    dataset: str
    methods: tuple
    accuracies: np.ndarray  # repetitions x methods

    @property
    def mean(self):
        return dict(zip(self.methods, self.accuracies.mean(axis=0).tolist()))

    @property
    def std(self):
        return dict(zip(self.methods, self.accuracies.std(axis=0).tolist()))


def run_accuracy_experiment(d, methods, n_trees=100, repetitions=10, seed=0,
                            test_fraction=0.3, engine_configs=None, threads=1,
                            gamma_zero=False, pooled_gamma=False):
    """Accuracy of each method over repeated random splits.

    Each repetition draws one split and one bagged pool shared by all
    methods. ``irt-uniform`` weights every tree equally through the same
    weighted-vote code path (a degenerate ability vector); ``tree`` is one
    unpruned tree grown on the whole training part. Engine chains get a
    seed derived from their configured seed and the repetition index.
    """
    methods = tuple(methods)
    if not methods:
        raise ValueError("at least one method is required")
    if unknown := set(methods) - set(METHODS):
        raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
    engine_configs = engine_configs or {}
    acc = np.empty((repetitions, len(methods)))
    for r in range(repetitions):
        rep_seed = derive_seed(seed, "repetition", r)
        train, test = train_test_split(d, test_fraction, rep_seed)
        base = _pool_model(train, n_trees, rep_seed, threads)
        X_test = base.prepare(test.features)
        for k, method in enumerate(methods):
            if method == "tree":
                t = fit_tree(base.preprocessor.transform(train))
                pred = t.predict(X_test)
            elif method == "bagging-majority":
                pred = majority_vote(base.pool.predict_all(X_test), base.pool.n_classes)
            elif method == "irt-uniform":
                pred, _ = predict_batch(base, test)
            else:
                engine = method.split("-", 1)[1]
                cfg = engine_configs.get(engine)
                if cfg is not None:
                    cfg = replace(cfg, seed=derive_seed(cfg.seed, "repetition", r))
                model, _, _ = fit_irt_ensemble(train, engine=engine, engine_config=cfg,
                                               seed=rep_seed, pool=base.pool,
                                               gamma_zero=gamma_zero,
                                               pooled_gamma=pooled_gamma)
                pred, _ = predict_batch(model, test)
            acc[r, k] = np.mean(pred == test.labels)
    return AccuracyResult(d.name, methods, acc)


def _pool_model(train, n_trees, seed, threads):
    """Bagged pool wrapped as an equal-weight ensemble (no engine fit)."""
    pre = Preprocessor.fit(train)
    pool = fit_base_pool(pre.transform(train), n_trees, TreeConfig(), seed=seed,
                         threads=threads)
    return IrtEnsembleModel(pool, AbilityVector.from_theta(np.zeros(len(pool))), {},
                            "uniform", pre)


@dataclass
class WinTable:
    """``counts[i, j]``: datasets on which method i is at least as accurate
    as method j (ties count for both; the diagonal is 0)."""

    methods: tuple
    datasets: tuple
    counts: np.ndarray

    @property
    def wins(self):
        return self.counts.sum(axis=1)

    @property
    def losses(self):
        return self.counts.sum(axis=0)

    @property
    def goal_difference(self):
        return self.wins - self.losses


def build_win_table(results, methods=None):
    """Pairwise win counts from ``{dataset: {method: accuracy}}``."""
    datasets = tuple(results)
    if not datasets:
        raise ValueError("no datasets")
    methods = tuple(methods or results[datasets[0]])
    acc = np.empty((len(datasets), len(methods)))
    for a, ds in enumerate(datasets):
        for b, m in enumerate(methods):
            if m not in results[ds]:
                raise ValueError(f"missing accuracy for method {m!r} on dataset {ds!r}")
            acc[a, b] = results[ds][m]
    counts = (acc[:, :, None] >= acc[:, None, :]).sum(axis=0).astype(np.int64)
    np.fill_diagonal(counts, 0)
    return WinTable(methods, datasets, counts)


# ---------------------------------------------------------------------------
# Difficulty reports
# ---------------------------------------------------------------------------


def boundary_distance(X, cells_per_side):
    """Distance from each point of the unit square to the nearest interior
    cell edge of a ``cells_per_side`` checkerboard."""
    X = np.asarray(X, dtype=float)
    lines = np.arange(1, cells_per_side) / cells_per_side
    return np.abs(X[:, :, None] - lines[None, None, :]).min(axis=(1, 2))


def boundary_correlation(X, beta, cells_per_side):
    """Correlation of difficulty with closeness (negated distance) to an edge."""
    return correlation(beta, -boundary_distance(X, cells_per_side))


@dataclass
class DifficultyReport:
    columns: tuple
    rows: list
    boundary_correlation: float = UNDEFINED


def difficulty_report(model, d, cells_per_side=None):
    """Per-sample difficulty rows (``sample_id``, features, label, estimate).

    ``model`` must have been fitted on ``d``. With ``cells_per_side`` the
    checkerboard boundary statistic is attached.
    """
    beta = np.asarray(model.item_params["beta"], dtype=float)
    if beta.size != d.n_samples:
        raise ValueError(f"model holds {beta.size} difficulties for {d.n_samples} samples")
    names = tuple(c.name for c in d.schema)
    columns = ("sample_id",) + names + ("label", "beta_estimate")
    rows = [
        (j, *d.features[j].tolist(), d.classes[d.labels[j]], float(beta[j]))
        for j in range(d.n_samples)
    ]
    stat = UNDEFINED
    if cells_per_side is not None:
        stat = boundary_correlation(d.features[:, :2], beta, cells_per_side)
    return DifficultyReport(columns, rows, stat)

