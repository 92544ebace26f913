"""Datasets: CSV ingestion, preprocessing, splitting and synthetic generators."""

import csv
import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
from scipy.special import expit, ndtr

from .rng import stream

__all__ = [
    "ColumnSpec",
    "DataError",
    "Dataset",
    "NormStats",
    "Preprocessor",
    "SimulatedResponses",
    "apply_normalization",
    "bootstrap_indices",
    "bundled_path",
    "gen_checkerboard",
    "load_bundled",
    "load_csv",
    "normalize",
    "one_hot_encode",
    "simulate_responses",
    "train_test_split",
]

CONTINUOUS = "continuous"
NOMINAL = "nominal"


class DataError(ValueError):
    """Raised for malformed input files and invalid dataset contents."""


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str = CONTINUOUS
    levels: tuple = ()

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, NOMINAL):
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")

    def to_dict(self):
        return {"name": self.name, "kind": self.kind, "levels": list(self.levels)}

    @classmethod
    def from_dict(cls, obj):
        return cls(obj["name"], obj["kind"], tuple(obj.get("levels", ())))


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with integer class labels.

    Attributes
    ----------
    features : ndarray of shape (m, d)
        Real-valued features. Nominal columns hold integer level codes.
    labels : ndarray of shape (m,)
        Class indices in ``0..n_classes-1``.
    schema : tuple of ColumnSpec
        One entry per feature column.
    classes : tuple of str
        Original class names, indexed by label.
    name : str
    label_name : str
        Name of the label column in the source file.
    """

    features: np.ndarray
    labels: np.ndarray
    schema: tuple
    classes: tuple
    name: str = "dataset"
    label_name: str = "label"

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        y = np.asarray(self.labels)
        if y.ndim != 1 or len(y) != X.shape[0]:
            raise DataError(
                f"{X.shape[0]} feature rows but {y.size} labels"
            )
        y = y.astype(np.int64)
        if len(self.schema) != X.shape[1]:
            raise DataError("schema length does not match the number of columns")
        if len(self.classes) < 2:
            raise DataError("fewer than 2 classes")
        if y.size and (y.min() < 0 or y.max() >= len(self.classes)):
            raise DataError("label index out of range")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "classes", tuple(self.classes))

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        return len(self.classes)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return replace(self, features=self.features[indices], labels=self.labels[indices])


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def _is_float(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_csv(path, label_column, schema_hints=None, schema=None, classes=None,
             require_labels=True):
    """Read a comma-separated file with a header row into a `Dataset`.

    Column kinds come from ``schema_hints`` (name -> "continuous" | "nominal")
    when given, otherwise a column is continuous iff every cell parses as a
    number. Nominal levels and class labels are coded in order of first
    appearance.

    ``schema`` and ``classes`` pin an existing coding (used when scoring new
    files against a trained model); unseen levels or classes are errors.
    With ``require_labels=False`` a file lacking the label column is accepted
    and every label is set to 0.
    """
    schema_hints = dict(schema_hints or {})
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}, line {reader.line_num}: expected {len(header)} "
                    f"fields, found {len(row)}"
                )
            cells = [c.strip() for c in row]
            for name, cell in zip(header, cells):
                if cell == "":
                    raise DataError(
                        f"{path}, line {reader.line_num}: missing value in column {name!r}"
                    )
            rows.append((reader.line_num, cells))

    has_labels = label_column in header
    if not has_labels and require_labels:
        raise DataError(f"{path}: label column {label_column!r} not found in header")
    if unknown := set(schema_hints) - set(header):
        raise DataError(f"{path}: schema hints name unknown columns {sorted(unknown)}")
    if not rows:
        raise DataError(f"{path}: no data rows")

    feature_names = [h for h in header if h != label_column]
    if schema is not None:
        schema = tuple(schema)
        if [c.name for c in schema] != feature_names:
            raise DataError(
                f"{path}: columns {feature_names} do not match the expected "
                f"columns {[c.name for c in schema]}"
            )

    col_index = {name: k for k, name in enumerate(header)}
    columns = []
    specs = []
    for k, name in enumerate(feature_names):
        src = col_index[name]
        cells = [(line, cells[src]) for line, cells in rows]
        if schema is not None:
            kind = schema[k].kind
        else:
            kind = schema_hints.get(name)
            if kind is None:
                kind = CONTINUOUS if all(_is_float(c) for _, c in cells) else NOMINAL
        if kind == CONTINUOUS:
            values = []
            for line, cell in cells:
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}, line {line}: cannot parse {cell!r} in "
                        f"continuous column {name!r}"
                    ) from None
            columns.append(values)
            specs.append(ColumnSpec(name, CONTINUOUS))
        elif kind == NOMINAL:
            levels = list(schema[k].levels) if schema is not None else []
            lookup = {lv: i for i, lv in enumerate(levels)}
            codes = []
            for line, cell in cells:
                if cell not in lookup:
                    if schema is not None:
                        raise DataError(
                            f"{path}, line {line}: level {cell!r} of column "
                            f"{name!r} was not seen in training"
                        )
                    lookup[cell] = len(levels)
                    levels.append(cell)
                codes.append(lookup[cell])
            columns.append(codes)
            specs.append(ColumnSpec(name, NOMINAL, tuple(levels)))
        else:
            raise DataError(f"column {name!r}: unknown kind {kind!r}")

    features = np.array(columns, dtype=float).T.reshape(len(rows), len(feature_names))

    class_list = list(classes) if classes is not None else []
    class_lookup = {c: i for i, c in enumerate(class_list)}
    labels = []
    if has_labels:
        src = col_index[label_column]
        for line, cells in rows:
            cell = cells[src]
            if cell not in class_lookup:
                if classes is not None:
                    raise DataError(f"{path}, line {line}: unknown class {cell!r}")
                class_lookup[cell] = len(class_list)
                class_list.append(cell)
            labels.append(class_lookup[cell])
    else:
        labels = [0] * len(rows)
    if len(class_list) < 2:
        raise DataError(f"{path}: label column has fewer than 2 classes")

    name = str(path).replace("\\", "/").rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return Dataset(features, np.array(labels), tuple(specs), tuple(class_list),
                   name=name, label_name=label_column)


def bundled_path(name):
    """Filesystem path of a bundled CSV (one of ``BUNDLED_LABELS``)."""
    return resources.files("irt_ensemble") / "datasets" / f"{name}.csv"


BUNDLED_LABELS = {"iris": "species", "checkerboard": "label", "wine": "cultivar"}


_BUNDLED_CLASSES = {"checkerboard": ("0", "1")}


def load_bundled(name):
    if name not in BUNDLED_LABELS:
        raise DataError(f"no bundled dataset {name!r}; choose from {sorted(BUNDLED_LABELS)}")
    with resources.as_file(bundled_path(name)) as p:
        return load_csv(p, BUNDLED_LABELS[name], classes=_BUNDLED_CLASSES.get(name))


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------


def one_hot_encode(d):
    """Replace each nominal column with one binary column per level."""
    if all(c.kind == CONTINUOUS for c in d.schema):
        return d
    blocks, specs = [], []
    for k, spec in enumerate(d.schema):
        col = d.features[:, k]
        if spec.kind == CONTINUOUS:
            blocks.append(col[:, None])
            specs.append(spec)
            continue
        codes = col.astype(np.int64)
        onehot = (codes[:, None] == np.arange(len(spec.levels))[None, :]).astype(float)
        blocks.append(onehot)
        specs.extend(ColumnSpec(f"{spec.name}={lv}") for lv in spec.levels)
    X = np.hstack(blocks) if blocks else np.empty((d.n_samples, 0))
    return replace(d, features=X, schema=tuple(specs))


@dataclass(frozen=True)
class NormStats:
    """Per-column z-score statistics; ``columns`` indexes continuous columns."""

    columns: tuple
    mean: tuple
    std: tuple

    def to_dict(self):
        return {"columns": list(self.columns), "mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_dict(cls, obj):
        return cls(tuple(obj["columns"]), tuple(obj["mean"]), tuple(obj["std"]))


def normalize(d):
    """Z-score every continuous column; return the new dataset and its stats.

    Zero-variance columns get unit scale, so they map to all zeros.
    """
    cols = tuple(k for k, c in enumerate(d.schema) if c.kind == CONTINUOUS)
    if not cols:
        return d, NormStats((), (), ())
    block = d.features[:, cols]
    mean = block.mean(axis=0)
    std = block.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    stats = NormStats(cols, tuple(float(v) for v in mean), tuple(float(v) for v in std))
    return apply_normalization(d, stats), stats


def apply_normalization(d, stats):
    if not stats.columns:
        return d
    X = np.array(d.features)
    cols = list(stats.columns)
    X[:, cols] = (X[:, cols] - np.asarray(stats.mean)) / np.asarray(stats.std)
    return replace(d, features=X)


@dataclass(frozen=True)
class Preprocessor:
    """Normalization fitted on training data, followed by one-hot encoding."""

    schema: tuple
    classes: tuple
    label_name: str
    stats: NormStats = field(default_factory=lambda: NormStats((), (), ()))

    @classmethod
    def fit(cls, d):
        _, stats = normalize(d)
        return cls(d.schema, d.classes, d.label_name, stats)

    def transform(self, d):
        if tuple(d.schema) != tuple(self.schema):
            raise DataError("dataset schema does not match the fitted preprocessor")
        return one_hot_encode(apply_normalization(d, self.stats))

    def to_dict(self):
        return {
            "schema": [c.to_dict() for c in self.schema],
            "classes": list(self.classes),
            "label_name": self.label_name,
            "stats": self.stats.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj):
        return cls(
            tuple(ColumnSpec.from_dict(c) for c in obj["schema"]),
            tuple(obj["classes"]),
            obj["label_name"],
            NormStats.from_dict(obj["stats"]),
        )


# ---------------------------------------------------------------------------
# Splitting and resampling
# ---------------------------------------------------------------------------


def train_test_split(d, test_fraction, seed):
    """Random disjoint split with ``round(m * test_fraction)`` test rows."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    m = d.n_samples
    n_test = int(math.floor(m * test_fraction + 0.5))
    if n_test < 1 or n_test > m - 1:
        raise ValueError(f"a {test_fraction} split of {m} rows leaves an empty part")
    perm = stream(seed, "split").permutation(m)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return d.subset(train_idx), d.subset(test_idx)


def bootstrap_indices(m, seed):
    """``m`` row indices drawn with replacement from ``range(m)``."""
    if m < 1:
        raise ValueError("cannot bootstrap an empty dataset")
    return stream(seed, "bootstrap").integers(0, m, size=m)


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def checkerboard_labels(X, cells_per_side):
    cells = np.floor(np.asarray(X) * cells_per_side).astype(np.int64)
    cells = np.clip(cells, 0, cells_per_side - 1)
    return (cells[:, 0] + cells[:, 1]) % 2


def gen_checkerboard(cells_per_side, n_points, seed):
    """Uniform points on the unit square labelled by checkerboard parity."""
    if cells_per_side < 2:
        raise ValueError("cells_per_side must be at least 2")
    if n_points < cells_per_side ** 2:
        raise ValueError("need at least one point per cell on average")
    X = stream(seed, "checkerboard").random((n_points, 2))
    y = checkerboard_labels(X, cells_per_side)
    return Dataset(X, y, (ColumnSpec("x"), ColumnSpec("y")), ("0", "1"),
                   name=f"checkerboard{cells_per_side}", label_name="label")


@dataclass(frozen=True)
class SimulatedResponses:
    """Response matrix (classifiers x samples) with its generating parameters."""

    matrix: np.ndarray
    true_theta: np.ndarray
    true_alpha: np.ndarray
    true_beta: np.ndarray
    true_gamma: np.ndarray
    link: str = "probit"


def success_probability(theta, alpha, beta, gamma, link="probit"):
    """Correct-response probability ``gamma + (1 - gamma) F(alpha * theta - beta)``."""
    eta = np.outer(theta, alpha) - np.asarray(beta)[None, :]
    if link == "probit":
        F = ndtr(eta)
    elif link == "logit":
        F = expit(eta)
    else:
        raise ValueError(f"unknown link {link!r}")
    gamma = np.asarray(gamma)[None, :]
    return gamma + (1.0 - gamma) * F


def simulate_responses(theta, alpha, beta, gamma, link="probit", seed=0):
    theta = np.asarray(theta, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if theta.ndim != 1 or not (alpha.shape == beta.shape == gamma.shape) or beta.ndim != 1:
        raise ValueError("theta must be 1-D and alpha, beta, gamma 1-D of equal length")
    if np.any(alpha <= 0):
        raise ValueError("discriminations must be positive")
    if np.any((gamma < 0) | (gamma >= 1)):
        raise ValueError("guessing parameters must lie in [0, 1)")
    p = success_probability(theta, alpha, beta, gamma, link)
    u = stream(seed, "responses").random(p.shape)
    Y = (u < p).astype(np.int8)
    return SimulatedResponses(Y, theta, alpha, beta, gamma, link)
