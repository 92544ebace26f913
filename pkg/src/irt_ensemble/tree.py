"""Unpruned CART classification trees and bootstrap tree pools."""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import bootstrap_indices
from .rng import derive_seed

__all__ = [
    "BasePool",
    "Tree",
    "TreeConfig",
    "bootstrap_sample",
    "dataset_fingerprint",
    "fit_base_pool",
    "fit_tree",
    "predict_tree",
]

TREE_FORMAT = "irt-ensemble-tree"
TREE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int | None = None
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")


class Tree:
    """A fitted binary classification tree stored as parallel node arrays.

    Node 0 is the root. For internal nodes ``feature >= 0`` and samples with
    ``x[feature] <= threshold`` descend to ``left``; leaves have
    ``feature == -1`` and predict ``argmax(counts)`` (lowest class on ties).
    """

    def __init__(self, feature, threshold, left, right, counts, n_features):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.n_features = int(n_features)
        self.value = np.argmax(self.counts, axis=1)

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def n_classes(self):
        return self.counts.shape[1]

    @property
    def n_leaves(self):
        return int(np.sum(self.feature < 0))

    def depth(self):
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for k in range(self.n_nodes):
            if self.feature[k] >= 0:
                depth[self.left[k]] = depth[self.right[k]] = depth[k] + 1
        return int(depth.max())

    def predict(self, X):
        """Class index for every row of ``X``."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"expected rows with {self.n_features} features, got shape {X.shape}"
            )
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] >= 0]
        return self.value[node]

    def __eq__(self, other):
        if not isinstance(other, Tree):
            return NotImplemented
        return (
            self.n_features == other.n_features
            and np.array_equal(self.feature, other.feature)
            and np.array_equal(self.threshold, other.threshold)
            and np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
            and np.array_equal(self.counts, other.counts)
        )

    __hash__ = None

    # -- serialization ---------------------------------------------------

    def to_dict(self):
        def node(k):
            if self.feature[k] < 0:
                return {"class": int(self.value[k]), "counts": self.counts[k].tolist()}
            return {
                "feature": int(self.feature[k]),
                "threshold": float(self.threshold[k]).hex(),
                "left": node(self.left[k]),
                "right": node(self.right[k]),
            }

        return {
            "format": TREE_FORMAT,
            "version": TREE_FORMAT_VERSION,
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "root": node(0),
        }

    @classmethod
    def from_dict(cls, obj):
        if obj.get("format") != TREE_FORMAT or obj.get("version") != TREE_FORMAT_VERSION:
            raise ValueError("not a version-1 tree document")
        feature, threshold, left, right, counts = [], [], [], [], []
        n_classes = obj["n_classes"]

        def visit(node):
            k = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            counts.append([0] * n_classes)
            if "feature" in node:
                feature[k] = node["feature"]
                threshold[k] = float.fromhex(node["threshold"])
                left[k] = visit(node["left"])
                right[k] = visit(node["right"])
                counts[k] = [a + b for a, b in zip(counts[left[k]], counts[right[k]])]
            else:
                counts[k] = list(node["counts"])
            return k

        visit(obj["root"])
        return cls(feature, threshold, left, right, counts, obj["n_features"])

    def dumps(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def _best_split(X, y_onehot, min_leaf):
    """Lowest weighted-Gini split as (feature, threshold, left_mask) or None.

    Ties go to the lowest feature index, then the lowest threshold.
    """
    n = X.shape[0]
    best = None
    best_score = np.inf
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        # candidate cut after position k: left = order[:k+1]
        valid = xs[:-1] < xs[1:]
        if min_leaf > 1:
            k = np.arange(n - 1)
            valid &= (k + 1 >= min_leaf) & (n - k - 1 >= min_leaf)
        if not valid.any():
            continue
        cum = np.cumsum(y_onehot[order], axis=0)[:-1]
        total = cum[-1] + y_onehot[order[-1]]
        n_left = np.arange(1, n, dtype=float)
        n_right = n - n_left
        right = total[None, :] - cum
        # n * weighted Gini, up to the constant n
        score = -(np.sum(cum * cum, axis=1) / n_left + np.sum(right * right, axis=1) / n_right)
        score = np.where(valid, score, np.inf)
        k = int(np.argmin(score))
        if score[k] < best_score:
            best_score = score[k]
            lo, hi = xs[k], xs[k + 1]
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            best = (f, thr)
    if best is None:
        return None
    f, thr = best
    return f, thr, X[:, f] <= thr


def _grow(X, y, n_classes, config):
    feature, threshold, left, right, counts = [], [], [], [], []
    onehot = np.eye(n_classes, dtype=np.int64)[y]

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(y[idx], minlength=n_classes))
        return len(feature) - 1

    # nodes are numbered when popped, giving preorder (root, left subtree, right)
    stack = [(-1, None, np.arange(len(y)), 0)]
    while stack:
        parent, side, idx, depth = stack.pop()
        k = new_node(idx)
        if parent >= 0:
            (left if side == "left" else right)[parent] = k
        if np.count_nonzero(counts[k]) <= 1:
            continue
        if config.max_depth is not None and depth >= config.max_depth:
            continue
        if len(idx) < 2 * config.min_samples_leaf:
            continue
        split = _best_split(X[idx], onehot[idx], config.min_samples_leaf)
        if split is None:
            continue
        f, thr, mask = split
        feature[k], threshold[k] = f, thr
        stack.append((k, "right", idx[~mask], depth + 1))
        stack.append((k, "left", idx[mask], depth + 1))
    return Tree(feature, threshold, left, right, np.array(counts), X.shape[1])


def fit_tree(d, config=None):
    """Fit an unpruned Gini tree to a `Dataset`.

    A node becomes a leaf only when it is pure, no two rows differ in any
    feature, ``min_samples_leaf`` rules out every cut, or ``max_depth`` is hit.
    """
    config = config or TreeConfig()
    if d.n_samples == 0:
        raise ValueError("cannot fit a tree to an empty dataset")
    return _grow(d.features, d.labels, d.n_classes, config)


def predict_tree(tree, x):
    """Class index of a single feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("predict_tree expects one feature vector")
    return int(tree.predict(x[None, :])[0])


def bootstrap_sample(d, seed):
    """Resample the rows of ``d`` with replacement."""
    return d.subset(bootstrap_indices(d.n_samples, seed))


def dataset_fingerprint(d):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(d.features).tobytes())
    h.update(np.ascontiguousarray(d.labels).tobytes())
    h.update(str(d.features.shape).encode())
    return h.hexdigest()


@dataclass
class BasePool:
    trees: list
    bootstrap_seeds: list
    training_meta: dict

    def __post_init__(self):
        if not self.trees:
            raise ValueError("a pool needs at least one tree")
        if len(set(self.bootstrap_seeds)) != len(self.bootstrap_seeds):
            raise ValueError("bootstrap seeds must be pairwise distinct")

    def __len__(self):
        return len(self.trees)

    @property
    def n_features(self):
        return self.trees[0].n_features

    @property
    def n_classes(self):
        return self.trees[0].n_classes

    def predict_all(self, X):
        """Matrix of predictions, one row per tree."""
        return np.vstack([t.predict(X) for t in self.trees])

    def to_dict(self):
        return {
            "trees": [t.to_dict() for t in self.trees],
            "bootstrap_seeds": [int(s) for s in self.bootstrap_seeds],
            "training_meta": self.training_meta,
        }

    @classmethod
    def from_dict(cls, obj):
        return cls([Tree.from_dict(t) for t in obj["trees"]],
                   list(obj["bootstrap_seeds"]), dict(obj["training_meta"]))


def fit_base_pool(d, n_trees, config=None, seed=0, threads=1):
    """Fit ``n_trees`` trees, tree ``k`` on a bootstrap drawn with a seed
    derived from ``(seed, k)``; the result does not depend on ``threads``."""
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    config = config or TreeConfig()
    seeds = [derive_seed(seed, "tree", k) for k in range(n_trees)]

    def fit_one(s):
        boot = bootstrap_sample(d, s)
        # a bootstrap may lose whole classes; keep the full class count
        return _grow(boot.features, boot.labels, d.n_classes, config)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            trees = list(ex.map(fit_one, seeds))
    else:
        trees = [fit_one(s) for s in seeds]
    meta = {
        "fingerprint": dataset_fingerprint(d),
        "n_samples": d.n_samples,
        "n_features": d.n_features,
        "n_classes": d.n_classes,
        "seed": int(seed),
        "max_depth": config.max_depth,
        "min_samples_leaf": config.min_samples_leaf,
    }
    return BasePool(trees, seeds, meta)
