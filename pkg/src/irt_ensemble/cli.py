"""Command-line interface: ``irt-ensemble <command> [options]``.

Every command writes its outputs and a ``manifest.json`` (arguments, seed,
SHA-256 of every output) into ``--out``. ``replay`` re-runs a manifest and
checks that each output is reproduced byte for byte.
"""

import argparse
import hashlib
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .data import (BUNDLED_LABELS, DataError, bundled_path, gen_checkerboard, load_bundled,
                   load_csv)
from .em import EmConfig
from .ensemble import ENGINES, fit_irt_ensemble, load_bundle, predict_batch, save_bundle
from .evaluation import (METHODS, SETTINGS, build_win_table, difficulty_report,
                         run_accuracy_experiment, run_recovery)
from .gibbs import GIBBS_DEFAULTS
from .reports import (accuracy_bars, difficulty_scatter, error_ratio_bars,
                      write_accuracy_table, write_difficulty_csv, write_predictions,
                      write_recovery_tables, write_win_table)
from .results import McmcConfig

MANIFEST = "manifest.json"


class StageError(Exception):
    def __init__(self, stage, message):
        super().__init__(message)
        self.stage = stage


class _Stage:
    """Context manager tagging any failure inside with a pipeline stage."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, Exception):
            raise StageError(self.name, str(exc)) from exc
        return False


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------


def _add_data_args(p):
    g = p.add_argument_group("data")
    g.add_argument("--data", help="CSV file, or a bundled name: " + ", ".join(sorted(BUNDLED_LABELS)))
    g.add_argument("--label", default=None, help="label column (default: bundled name's, else 'label')")
    g.add_argument("--checkerboard", nargs=2, type=int, metavar=("CELLS", "POINTS"),
                   help="generate a checkerboard instead of reading a file")


def _add_engine_args(p, engine=True):
    if engine:
        p.add_argument("--engine", choices=ENGINES, default="model2")
    p.add_argument("--iterations", type=int, default=None,
                   help="chain length (model1/model2) or EM iteration cap (model3)")
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--gamma-zero", action="store_true", help="model2 without guessing")
    p.add_argument("--pooled-gamma", action="store_true", help="model2 with one shared guessing draw")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="irt-ensemble",
                                     description="Bagged trees weighted by IRT abilities.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a pool and an ability model, write a bundle")
    _add_data_args(p)
    _add_engine_args(p)
    p.add_argument("--trees", type=int, default=100)
    _add_common(p)

    p = sub.add_parser("predict", help="score a CSV with a trained bundle")
    p.add_argument("--model", required=True, help="bundle written by train")
    p.add_argument("--data", required=True, help="CSV file or bundled name")
    p.add_argument("--label", default=None)
    _add_common(p)

    p = sub.add_parser("recover", help="parameter-recovery simulation")
    p.add_argument("--setting", choices=SETTINGS + ("all",), default="all")
    p.add_argument("--engines", nargs="+", choices=ENGINES, default=list(ENGINES))
    p.add_argument("--classifiers", type=int, default=1000)
    p.add_argument("--samples", type=int, default=10)
    _add_engine_args(p, engine=False)
    _add_common(p)

    p = sub.add_parser("compare", help="accuracy experiment and win table")
    p.add_argument("--datasets", nargs="+", default=["iris", "wine", "checkerboard"])
    p.add_argument("--methods", nargs="+", choices=METHODS,
                   default=["irt-model2", "tree", "bagging-majority"])
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--test-fraction", type=float, default=0.3)
    _add_engine_args(p, engine=False)
    _add_common(p)

    p = sub.add_parser("report", help="per-sample difficulty table and scatter plot")
    _add_data_args(p)
    _add_engine_args(p)
    p.add_argument("--trees", type=int, default=500)
    p.add_argument("--cells", type=int, default=None,
                   help="checkerboard cells per side for the boundary statistic")
    _add_common(p)

    p = sub.add_parser("replay", help="re-run a manifest and compare outputs")
    p.add_argument("manifest")
    p.add_argument("--threads", type=int, default=None, help="override the recorded thread count")
    p.add_argument("--out", default=None, help="where to re-run (default: temporary directory)")
    return parser


def _engine_config(args, engine):
    if engine == "model3":
        return EmConfig(max_iterations=args.iterations or EmConfig.max_iterations, seed=args.seed)
    base = McmcConfig() if engine == "model1" else GIBBS_DEFAULTS
    n = args.iterations or base.n_iterations
    burn = args.burn_in if args.burn_in is not None else min(base.burn_in, n // 3)
    return McmcConfig(n_iterations=n, burn_in=burn, seed=args.seed)


def _resolve_label(name, label):
    if label:
        return label
    return BUNDLED_LABELS.get(name, "label")


def _load_dataset(spec, label=None, checkerboard=None, seed=0):
    if checkerboard is not None:
        cells, points = checkerboard
        return gen_checkerboard(cells, points, seed), cells
    if spec is None:
        raise DataError("one of --data or --checkerboard is required")
    if spec in BUNDLED_LABELS and not os.path.exists(spec):
        return load_bundled(spec), (4 if spec == "checkerboard" else None)
    return load_csv(spec, _resolve_label(None, label)), None


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _json_dump(obj, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def cmd_train(args):
    with _Stage("data"):
        d, _ = _load_dataset(args.data, args.label, args.checkerboard, args.seed)
    with _Stage("fit"):
        model, result, Y = fit_irt_ensemble(
            d, n_trees=args.trees, engine=args.engine,
            engine_config=_engine_config(args, args.engine), seed=args.seed,
            threads=args.threads, gamma_zero=args.gamma_zero, pooled_gamma=args.pooled_gamma,
        )
    outputs = []
    with _Stage("write"):
        path = os.path.join(args.out, "model.json")
        save_bundle(model, path)
        outputs.append(path)
        w = model.weights
        order = np.argsort(-w, kind="stable")[:5]
        beta = np.asarray(model.item_params["beta"])
        summary = {
            "engine": args.engine,
            "n_trees": len(model.pool),
            "n_samples": d.n_samples,
            "weights_sum": float(w.sum()),
            "top_weights": [{"tree": int(i), "theta": float(model.abilities.theta[i]),
                             "weight": float(w[i])} for i in order],
            "beta_range": [float(beta.min()), float(beta.max())],
            "training_accuracy": predict_batch(model, d)[1],
            "performance_matrix_mean": float(np.asarray(Y).mean()),
        }
        if args.engine == "model3":
            summary["converged"] = bool(result.diagnostics["converged"])
            summary["stop_reason"] = result.diagnostics["stop_reason"]
            hist = os.path.join(args.out, "history.csv")
            result.history_csv(hist)
            outputs.append(hist)
        path = os.path.join(args.out, "summary.json")
        _json_dump(summary, path)
        outputs.append(path)
    print(f"trained {args.engine} on {d.n_samples} samples with {len(model.pool)} trees")
    print(f"weights sum to {summary['weights_sum']:.12f}; top 5:")
    for rec in summary["top_weights"]:
        print(f"  tree {rec['tree']:4d}  theta {rec['theta']:+.4f}  weight {rec['weight']:.6f}")
    print(f"beta range [{summary['beta_range'][0]:.4f}, {summary['beta_range'][1]:.4f}]")
    if "converged" in summary:
        print(f"converged: {summary['converged']} ({summary['stop_reason']})")
    return outputs


def _csv_header(path):
    with open(path, encoding="utf-8") as fh:
        return [h.strip() for h in fh.readline().rstrip("\n").split(",")]


def cmd_predict(args):
    with _Stage("load-model"):
        model = load_bundle(args.model)
        pre = model.preprocessor
        if pre is None:
            raise DataError("bundle has no preprocessing record")
    with _Stage("data"):
        path = args.data
        if path in BUNDLED_LABELS and not os.path.exists(path):
            path = str(bundled_path(path))
        label = args.label or pre.label_name
        has_labels = label in _csv_header(path)
        try:
            d = load_csv(path, label, schema=pre.schema, classes=pre.classes,
                         require_labels=False)
        except DataError as e:
            raise DataError(f"{e} (the model was trained on columns "
                            f"{[c.name for c in pre.schema]})") from e
    with _Stage("predict"):
        pred, acc = predict_batch(model, d)
    with _Stage("write"):
        out = os.path.join(args.out, "predictions.csv")
        write_predictions(out, pred, pre.classes, d.labels if has_labels else None)
        summary = {"n_rows": int(d.n_samples), "accuracy": acc if has_labels else None}
        spath = os.path.join(args.out, "summary.json")
        _json_dump(summary, spath)
    print(f"wrote {d.n_samples} predictions")
    if has_labels:
        print(f"accuracy {acc:.4f}")
    return [out, spath]


def cmd_recover(args):
    settings = SETTINGS if args.setting == "all" else (args.setting,)
    reports = {}
    with _Stage("recover"):
        for setting in settings:
            configs = {e: _engine_config(args, e) for e in args.engines}
            reports[setting] = run_recovery(setting, args.engines, configs, seed=args.seed,
                                            n_classifiers=args.classifiers,
                                            n_samples=args.samples, gamma_zero=args.gamma_zero)
    with _Stage("write"):
        outputs = write_recovery_tables(reports, args.out)
        for setting, by_engine in reports.items():
            for fam in ("theta", "beta"):
                path = os.path.join(args.out, f"error_ratio_{setting}_{fam}.svg")
                error_ratio_bars(by_engine, fam, path)
                outputs.append(path)
    for setting, by_engine in reports.items():
        for e, rep in by_engine.items():
            b, t = rep.metrics["beta"], rep.metrics["theta"]
            print(f"{setting:7s} {e}: beta corr {b['correlation']:.3f} mse {b['mse']:.3f}; "
                  f"theta corr {t['correlation']:.3f}")
    return outputs


def cmd_compare(args):
    results = []
    engines = [m[len("irt-"):] for m in args.methods if m[len("irt-"):] in ENGINES]
    engine_configs = {e: _engine_config(args, e) for e in engines}
    for spec in args.datasets:
        with _Stage(f"data:{spec}"):
            d, _ = _load_dataset(spec)
        with _Stage(f"experiment:{spec}"):
            res = run_accuracy_experiment(
                d, args.methods, n_trees=args.trees, repetitions=args.repetitions,
                seed=args.seed, test_fraction=args.test_fraction,
                engine_configs=engine_configs, threads=args.threads,
                gamma_zero=args.gamma_zero, pooled_gamma=args.pooled_gamma,
            )
        results.append(res)
        print(spec + ": " + ", ".join(f"{m} {v:.4f}" for m, v in res.mean.items()))
    with _Stage("write"):
        acc_path = os.path.join(args.out, "accuracy.csv")
        write_accuracy_table(results, acc_path)
        table = build_win_table({r.dataset: r.mean for r in results}, args.methods)
        win_path = os.path.join(args.out, "win_table.csv")
        write_win_table(table, win_path)
        svg = os.path.join(args.out, "accuracy.svg")
        accuracy_bars(results, svg)
    for m, gd in zip(table.methods, table.goal_difference):
        print(f"goal difference {m}: {gd:+d}")
    return [acc_path, win_path, svg]


def cmd_report(args):
    with _Stage("data"):
        d, cells = _load_dataset(args.data, args.label, args.checkerboard, args.seed)
        cells = args.cells or cells
    with _Stage("fit"):
        model, _, _ = fit_irt_ensemble(
            d, n_trees=args.trees, engine=args.engine,
            engine_config=_engine_config(args, args.engine), seed=args.seed,
            threads=args.threads, gamma_zero=args.gamma_zero, pooled_gamma=args.pooled_gamma,
        )
    with _Stage("report"):
        rep = difficulty_report(model, d, cells)
    with _Stage("write"):
        csv_path = os.path.join(args.out, "difficulty.csv")
        write_difficulty_csv(rep, csv_path)
        outputs = [csv_path]
        if d.n_features == 2:
            svg = os.path.join(args.out, "difficulty.svg")
            difficulty_scatter(rep, svg)
            outputs.append(svg)
        spath = os.path.join(args.out, "summary.json")
        _json_dump({"n_samples": d.n_samples, "cells_per_side": cells,
                    "boundary_correlation": rep.boundary_correlation}, spath)
        outputs.append(spath)
    if cells is not None:
        print(f"boundary correlation {rep.boundary_correlation:.4f}")
    return outputs


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "recover": cmd_recover,
    "compare": cmd_compare,
    "report": cmd_report,
}


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _strip_out(argv):
    """Drop ``--out VALUE`` / ``--out=VALUE`` from an argument list."""
    kept, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a == "--out":
            skip = True
        elif not a.startswith("--out="):
            kept.append(a)
    return kept


def run_command(argv):
    """Parse, prepare ``--out``, run, and write the manifest. Returns the manifest."""
    args = build_parser().parse_args(argv)
    if args.command == "replay":
        raise ValueError("replay manifests cannot be nested")
    with _Stage("setup"):
        os.makedirs(args.out, exist_ok=True)
        if not os.path.isdir(args.out) or not os.access(args.out, os.W_OK):
            raise OSError(f"output directory {args.out!r} is not writable")
    outputs = COMMANDS[args.command](args)
    config = {k: v for k, v in vars(args).items() if k != "out"}
    manifest = {
        "tool": "irt-ensemble",
        "version": __version__,
        "command": args.command,
        "argv": _strip_out(list(argv)),
        "config": config,
        "seed": args.seed,
        "outputs": {os.path.basename(p): sha256_file(p) for p in outputs},
    }
    _json_dump(manifest, os.path.join(args.out, MANIFEST))
    missing = [p for p in outputs if not os.path.isfile(p)]
    if missing:
        raise StageError("write", f"outputs not written: {missing}")
    return manifest


def replay(manifest_path, out=None, threads=None):
    """Re-run a manifest; return ``{output name: matches}``."""
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    argv = list(manifest["argv"])
    if threads is not None:
        argv = _replace_option(argv, "--threads", str(threads))

    def rerun(target):
        fresh = run_command(argv + ["--out", target])
        return {name: fresh["outputs"].get(name) == digest
                for name, digest in manifest["outputs"].items()}

    if out is not None:
        return rerun(out)
    with tempfile.TemporaryDirectory() as tmp:
        return rerun(tmp)


def _replace_option(argv, flag, value):
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == flag:
            skip = True
            continue
        if a.startswith(flag + "="):
            continue
        out.append(a)
    return out + [flag, value]


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            result = replay(args.manifest, args.out, args.threads)
            for name, ok in sorted(result.items()):
                print(f"{'identical' if ok else 'DIFFERS  '}  {name}")
            return 0 if all(result.values()) else 1
        run_command(argv)
    except StageError as e:
        print(f"error [{e.stage}]: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
