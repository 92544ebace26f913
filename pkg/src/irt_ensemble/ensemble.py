"""IRT-weighted bagging: performance matrix, softmax weights, weighted votes."""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, Preprocessor
from .em import EmConfig, fit_em
from .gibbs import GIBBS_DEFAULTS, fit_gibbs
from .mh import fit_mh
from .results import McmcConfig, check_performance_matrix
from .tree import BasePool, TreeConfig, fit_base_pool

__all__ = [
    "AbilityVector",
    "ENGINES",
    "IrtEnsembleModel",
    "PerformanceMatrix",
    "build_performance_matrix",
    "compute_weights",
    "fit_engine",
    "fit_irt_ensemble",
    "load_bundle",
    "majority_vote",
    "predict_batch",
    "predict_weighted",
    "save_bundle",
    "vote",
]

ENGINES = ("model1", "model2", "model3")
BUNDLE_FORMAT = "irt-ensemble-bundle"
BUNDLE_VERSION = 1


@dataclass(frozen=True)
class PerformanceMatrix:
    """Classifier x sample 0/1 outcomes (1 = correctly classified)."""

    entries: np.ndarray
    classifier_ids: tuple = ()
    sample_ids: tuple = ()

    def __post_init__(self):
        Y = check_performance_matrix(self.entries)
        Y.setflags(write=False)
        object.__setattr__(self, "entries", Y)
        n, m = Y.shape
        if not self.classifier_ids:
            object.__setattr__(self, "classifier_ids", tuple(range(n)))
        if not self.sample_ids:
            object.__setattr__(self, "sample_ids", tuple(range(m)))
        if len(self.classifier_ids) != n or len(self.sample_ids) != m:
            raise ValueError("id lists do not match the matrix shape")

    @property
    def shape(self):
        return self.entries.shape

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def build_performance_matrix(pool, d):
    """Entry ``(i, j)`` is 1 iff tree ``i`` predicts the label of sample ``j``."""
    if d.n_features != pool.n_features:
        raise ValueError(
            f"pool expects {pool.n_features} features, dataset has {d.n_features}"
        )
    preds = pool.predict_all(d.features)
    return PerformanceMatrix((preds == d.labels[None, :]).astype(np.int8))


def compute_weights(theta):
    """Softmax of the abilities, computed after subtracting the maximum."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size == 0:
        raise ValueError("theta must be a non-empty vector")
    if not np.all(np.isfinite(theta)):
        raise ValueError("abilities must be finite")
    e = np.exp(theta - theta.max())
    return e / e.sum()


@dataclass(frozen=True)
class AbilityVector:
    theta: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_theta(cls, theta):
        theta = np.asarray(theta, dtype=float)
        return cls(theta, compute_weights(theta))


def vote(predictions, weights, n_classes):
    """Weighted vote over a (trees x points) prediction matrix.

    Weights are accumulated tree by tree in pool order, so classes backed by
    equally many equal-weight trees receive bit-identical totals. Ties go to
    the lowest class index.
    """
    predictions = np.atleast_2d(np.asarray(predictions))
    weights = np.asarray(weights, dtype=float)
    if predictions.shape[0] != weights.size:
        raise ValueError("one weight per tree is required")
    n_points = predictions.shape[1]
    scores = np.zeros((n_points, n_classes))
    cols = np.arange(n_points)
    for row, w in zip(predictions, weights):
        scores[cols, row] += w
    return np.argmax(scores, axis=1)


def majority_vote(predictions, n_classes):
    """Unweighted plurality vote (integer counts), ties to the lowest class."""
    predictions = np.atleast_2d(np.asarray(predictions))
    counts = np.zeros((predictions.shape[1], n_classes), dtype=np.int64)
    cols = np.arange(predictions.shape[1])
    for row in predictions:
        counts[cols, row] += 1
    return np.argmax(counts, axis=1)


@dataclass(frozen=True)
class IrtEnsembleModel:
    pool: BasePool
    abilities: AbilityVector
    item_params: dict
    engine: str
    preprocessor: Preprocessor | None = None
    fit_summary: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.pool) != self.abilities.theta.size:
            raise ValueError("pool size must equal the number of abilities")
        if self.engine not in ENGINES + ("uniform",):
            raise ValueError(f"unknown engine tag {self.engine!r}")

    @property
    def weights(self):
        return self.abilities.weights

    def with_theta(self, theta, engine=None):
        """Copy of the model with replaced abilities (weights recomputed)."""
        return replace(self, abilities=AbilityVector.from_theta(theta),
                       engine=engine or self.engine)

    def prepare(self, X):
        """Map raw feature rows into the space the trees were grown in."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.preprocessor is None:
            out = X
        else:
            pre = self.preprocessor
            if X.shape[1] != len(pre.schema):
                raise ValueError(
                    f"expected {len(pre.schema)} raw features, got {X.shape[1]}"
                )
            dummy = Dataset(X, np.zeros(len(X), dtype=np.int64), pre.schema, pre.classes)
            out = pre.transform(dummy).features
        if out.shape[1] != self.pool.n_features:
            raise ValueError(
                f"model expects {self.pool.n_features} features, got {out.shape[1]}"
            )
        return out


def predict_weighted(model, x):
    """Class index chosen by the weighted vote for one raw feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("x must be a single feature vector")
    return int(_predict(model, model.prepare(x[None, :]))[0])


def _predict(model, X):
    return vote(model.pool.predict_all(X), model.weights, model.pool.n_classes)


def predict_batch(model, d):
    """Predicted class indices for every row of ``d`` and their accuracy."""
    if d.n_samples == 0:
        raise ValueError("cannot predict an empty dataset")
    pred = _predict(model, model.prepare(d.features))
    return pred, float(np.mean(pred == d.labels))


def fit_engine(Y, engine, config=None, gamma_zero=False, pooled_gamma=False):
    """Run one of the three inference engines on a performance matrix.

    ``config`` is a `McmcConfig` for model1/model2 and an `EmConfig` for
    model3; ``None`` selects the engine defaults.
    """
    Y = np.asarray(Y)
    if engine == "model1":
        return fit_mh(Y, config=config or McmcConfig())
    if engine == "model2":
        return fit_gibbs(Y, config=config or GIBBS_DEFAULTS, gamma_zero=gamma_zero,
                         pooled_gamma=pooled_gamma)
    if engine == "model3":
        return fit_em(Y, config=config or EmConfig())
    raise ValueError(f"unknown engine {engine!r}; expected one of {ENGINES}")


def fit_irt_ensemble(d, n_trees=100, engine="model2", engine_config=None, seed=0,
                     tree_config=None, threads=1, gamma_zero=False, pooled_gamma=False,
                     preprocess=True, pool=None):
    """Grow a bagged pool on ``d``, score it, and weight trees by ability.

    Returns ``(model, fit_result, performance_matrix)``. A pre-built ``pool``
    (grown on the preprocessed ``d``) skips tree fitting.
    """
    pre = Preprocessor.fit(d) if preprocess else None
    train = pre.transform(d) if pre is not None else d
    if pool is None:
        pool = fit_base_pool(train, n_trees, tree_config or TreeConfig(), seed=seed,
                             threads=threads)
    Y = build_performance_matrix(pool, train)
    result = fit_engine(Y, engine, engine_config, gamma_zero, pooled_gamma)
    summary = {
        "engine": engine,
        "n_trees": len(pool),
        "seed": int(seed),
        "diagnostics": json.loads(result.diagnostics_json())["diagnostics"],
    }
    model = IrtEnsembleModel(
        pool=pool,
        abilities=AbilityVector.from_theta(result.theta),
        item_params={k: np.asarray(v, dtype=float) for k, v in result.item_params().items()},
        engine=engine,
        preprocessor=pre,
        fit_summary=summary,
    )
    return model, result, Y


# ---------------------------------------------------------------------------
# Bundles
# ---------------------------------------------------------------------------


def bundle_dict(model):
    return {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "engine": model.engine,
        "pool": model.pool.to_dict(),
        "theta": model.abilities.theta.tolist(),
        "weights": model.abilities.weights.tolist(),
        "item_params": {k: np.asarray(v).tolist() for k, v in model.item_params.items()},
        "preprocessor": None if model.preprocessor is None else model.preprocessor.to_dict(),
        "fit_summary": model.fit_summary,
    }


def dumps_bundle(model):
    return json.dumps(bundle_dict(model), sort_keys=True, separators=(",", ":")) + "\n"


def save_bundle(model, path):
    """Write the model as deterministic JSON (sorted keys, repr floats)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_bundle(model))


def load_bundle(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("format") != BUNDLE_FORMAT:
        raise ValueError(f"{path} is not a model bundle")
    if obj.get("version") != BUNDLE_VERSION:
        raise ValueError(
            f"bundle version {obj.get('version')} is not supported (expected {BUNDLE_VERSION})"
        )
    pre = obj["preprocessor"]
    theta = np.asarray(obj["theta"], dtype=float)
    return IrtEnsembleModel(
        pool=BasePool.from_dict(obj["pool"]),
        abilities=AbilityVector(theta, np.asarray(obj["weights"], dtype=float)),
        item_params={k: np.asarray(v, dtype=float) for k, v in obj["item_params"].items()},
        engine=obj["engine"],
        preprocessor=None if pre is None else Preprocessor.from_dict(pre),
        fit_summary=obj["fit_summary"],
    )
