"""CSV tables and SVG figures with byte-stable output."""

import csv
import math

import numpy as np

__all__ = [
    "difficulty_scatter",
    "error_ratio_bars",
    "format_value",
    "write_accuracy_table",
    "write_csv",
    "write_difficulty_csv",
    "write_predictions",
    "write_recovery_tables",
    "write_win_table",
]


def format_value(v):
    """Shortest round-trip text for floats, ``nan`` for undefined values."""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    if isinstance(v, (np.integer, np.bool_)):
        return str(v.item())
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])


METRIC_COLUMNS = ("correlation", "mse", "mae", "variance_ratio")


def write_recovery_tables(reports, out_dir):
    """Metric table plus per-component estimates and error ratios.

    ``reports`` maps setting -> engine -> RecoveryReport. Returns the paths
    written.
    """
    paths = []
    rows = []
    for setting, by_engine in reports.items():
        for engine, rep in by_engine.items():
            for fam in ("theta", "beta"):
                m = rep.metrics[fam]
                rows.append([setting, engine, fam, *(m[c] for c in METRIC_COLUMNS)])
    path = f"{out_dir}/recovery_metrics.csv"
    write_csv(path, ["setting", "engine", "parameter", *METRIC_COLUMNS], rows)
    paths.append(path)

    for setting, by_engine in reports.items():
        engines = list(by_engine)
        first = by_engine[engines[0]]
        rows = []
        for fam in ("theta", "beta"):
            truth = first.truth[fam]
            for k in range(truth.size):
                rows.append([fam, k, truth[k]]
                            + [by_engine[e].estimates[fam][k] for e in engines]
                            + [by_engine[e].error_ratios[fam][k] for e in engines])
        header = (["parameter", "index", "truth"]
                  + [f"estimate_{e}" for e in engines]
                  + [f"error_ratio_{e}" for e in engines])
        path = f"{out_dir}/recovery_estimates_{setting}.csv"
        write_csv(path, header, rows)
        paths.append(path)
    return paths


def write_accuracy_table(results, path):
    rows = []
    for res in results:
        mean, std = res.mean, res.std
        for m in res.methods:
            rows.append([res.dataset, m, mean[m], std[m], res.accuracies.shape[0]])
    write_csv(path, ["dataset", "method", "mean_accuracy", "std_accuracy", "repetitions"], rows)


def write_win_table(table, path):
    header = ["method", *table.methods, "wins", "losses", "goal_difference"]
    rows = [
        [m, *table.counts[i].tolist(), table.wins[i], table.losses[i], table.goal_difference[i]]
        for i, m in enumerate(table.methods)
    ]
    write_csv(path, header, rows)


def write_difficulty_csv(report, path):
    write_csv(path, report.columns, report.rows)


def write_predictions(path, predictions, classes, labels=None):
    header = ["row", "predicted"] + ([] if labels is None else ["label", "correct"])
    rows = []
    for i, p in enumerate(predictions):
        row = [i, classes[p]]
        if labels is not None:
            row += [classes[labels[i]], int(p == labels[i])]
        rows.append(row)
    write_csv(path, header, rows)


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "irt-ensemble"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def error_ratio_bars(by_engine, family, path):
    """Grouped bars of per-component error ratios, one group per component."""
    plt = _pyplot()
    engines = list(by_engine)
    n = by_engine[engines[0]].truth[family].size
    width = 0.8 / len(engines)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for k, e in enumerate(engines):
        ax.bar(np.arange(n) + k * width, by_engine[e].error_ratios[family], width, label=e)
    ax.set_xlabel(f"{family} component")
    ax.set_ylabel("error ratio")
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def difficulty_scatter(report, path):
    """Points sized by estimated difficulty, coloured by class."""
    plt = _pyplot()
    rows = report.rows
    x = np.array([r[1] for r in rows])
    y = np.array([r[2] for r in rows])
    labels = [r[-2] for r in rows]
    beta = np.array([r[-1] for r in rows])
    span = np.ptp(beta)
    size = 2.0 + 40.0 * ((beta - beta.min()) / span if span > 0 else np.zeros_like(beta))
    fig, ax = plt.subplots(figsize=(5, 5))
    for k, cls in enumerate(sorted(set(labels))):
        mask = np.array([lab == cls for lab in labels])
        ax.scatter(x[mask], y[mask], s=size[mask], color=f"C{k}", label=str(cls),
                   linewidths=0)
    ax.set_aspect("equal")
    ax.legend(frameon=False, loc="upper right")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def accuracy_bars(results, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 3.5))
    methods = results[0].methods
    width = 0.8 / len(methods)
    for k, m in enumerate(methods):
        ax.bar(np.arange(len(results)) + k * width, [r.mean[m] for r in results], width,
               yerr=[r.std[m] for r in results], label=m)
    ax.set_xticks(np.arange(len(results)) + 0.4 - width / 2)
    ax.set_xticklabels([r.dataset for r in results])
    ax.set_ylabel("mean accuracy")
    ax.legend(frameon=False, fontsize="small")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)
