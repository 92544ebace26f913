"""Containers shared by the three inference engines."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = ["FitResult", "McmcConfig", "Trace", "check_performance_matrix"]


def check_performance_matrix(Y):
    """Validate a classifiers x samples 0/1 matrix and return it as int8."""
    Y = np.asarray(Y)
    if Y.ndim != 2 or Y.shape[0] < 1 or Y.shape[1] < 1:
        raise ValueError(f"performance matrix must be 2-D and non-empty, got {Y.shape}")
    if not np.isin(Y, (0, 1)).all():
        raise ValueError("performance matrix entries must be 0 or 1")
    return Y.astype(np.int8)


@dataclass(frozen=True)
class McmcConfig:
    """Chain length and proposal scales.

    ``step_sizes`` maps block names (theta, alpha, beta, gamma) to random-walk
    scales on the sampling scale (log for alpha, logit for gamma). Unlisted
    blocks use ``default_step``.
    """

    n_iterations: int = 5000
    burn_in: int = 2000
    thinning: int = 1
    step_sizes: dict = field(default_factory=dict)
    default_step: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be positive")
        if not 0 <= self.burn_in < self.n_iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_iterations")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.default_step <= 0 or any(v <= 0 for v in self.step_sizes.values()):
            raise ValueError("step sizes must be positive")

    def step(self, block):
        return float(self.step_sizes.get(block, self.default_step))

    def retained(self, iteration):
        """Whether the draw after ``iteration`` (0-based) is kept."""
        return iteration >= self.burn_in and (iteration - self.burn_in) % self.thinning == 0


@dataclass
class Trace:
    """Retained draws per parameter family (draws x components)."""

    samples: dict
    acceptance: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {v.shape[0] for v in self.samples.values()}
        if len(lengths) > 1:
            raise ValueError("trace arrays have inconsistent lengths")
        for name, rate in self.acceptance.items():
            if np.any((np.asarray(rate) < 0) | (np.asarray(rate) > 1)):
                raise ValueError(f"acceptance rate for {name} outside [0, 1]")

    @property
    def n_draws(self):
        return next(iter(self.samples.values())).shape[0] if self.samples else 0

    def to_csv(self, path, families=None):
        families = families or sorted(self.samples)
        header, blocks = [], []
        for name in families:
            arr = self.samples[name]
            header += [f"{name}[{k}]" for k in range(arr.shape[1])]
            blocks.append(arr)
        table = np.hstack(blocks)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in table:
                w.writerow([repr(float(v)) for v in row])


@dataclass
class FitResult:
    """Point estimates and diagnostics from one engine.

    Estimates are posterior means for the samplers and the final iterate for
    EM. Model 3 reports ``alpha = 1`` and ``gamma = 0``.
    """

    engine: str
    theta: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    trace: Trace | None = None
    history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def item_params(self):
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}

    def diagnostics_json(self):
        def plain(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer, np.bool_)):
                return v.item()
            if isinstance(v, dict):
                return {k: plain(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [plain(x) for x in v]
            return v

        summary = {
            "engine": self.engine,
            "posterior_mean": {
                "theta": self.theta.tolist(),
                "alpha": self.alpha.tolist(),
                "beta": self.beta.tolist(),
                "gamma": self.gamma.tolist(),
            },
            "diagnostics": plain(self.diagnostics),
        }
        if self.trace is not None:
            summary["acceptance"] = plain(self.trace.acceptance)
        return json.dumps(summary, indent=2, sort_keys=True)

    def history_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "log_likelihood", "gradient_norm", "step_size"])
            for rec in self.history:
                w.writerow([rec["iteration"], repr(rec["log_likelihood"]),
                            repr(rec["gradient_norm"]), repr(rec["step_size"])])
