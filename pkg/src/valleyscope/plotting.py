"""SVG figures from the CSV reports written by the pipeline commands."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed hash salt and no date stamp so repeated runs give identical files
matplotlib.rcParams["svg.hashsalt"] = "valleyscope"


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _num(rows, col):
    return [float(r[col]) if r[col] != "" else float("nan") for r in rows]


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_metrics(csv_path, out_path):
    rows = _read(csv_path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(_num(rows, "epoch"), _num(rows, "reconstruction_error"), label="reconstruction error")
    if rows and "log_likelihood" in rows[0]:
        ax2 = ax.twinx()
        ax2.plot(_num(rows, "epoch"), _num(rows, "log_likelihood"), color="C1", label="log-likelihood")
        ax2.set_ylabel("log-likelihood")
    ax.set_xlabel("epoch")
    ax.set_ylabel("reconstruction error")
    fig.tight_layout()
    _save(fig, out_path)


def plot_histogram(csv_path, out_path, xlabel="energy"):
    rows = _read(csv_path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if rows:
        lo, hi = _num(rows, "bin_lo"), _num(rows, "bin_hi")
        mid = [(a + b) / 2 for a, b in zip(lo, hi)]
        width = [(b - a) * 0.9 for a, b in zip(lo, hi)]
        shared, only = _num(rows, "shared"), _num(rows, "only")
        ax.bar(mid, shared, width=width, label="shared")
        ax.bar(mid, only, width=width, bottom=shared, label="this sampler only")
        ax.legend()
    ax.set_xlabel(xlabel)
    ax.set_ylabel("valleys")
    fig.tight_layout()
    _save(fig, out_path)


def plot_sweep(csv_path, out_path):
    rows = _read(csv_path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    s = _num(rows, "scale")
    ax.plot(s, _num(rows, "classification_error"), marker="o", label="classification")
    ax.plot(s, _num(rows, "reconstruction_error"), marker="s", label="reconstruction")
    ax.set_xlabel("scale s")
    ax.set_ylabel("error")
    ax.legend()
    fig.tight_layout()
    _save(fig, out_path)


def plot_counts(csv_path, out_path):
    rows = _read(csv_path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = _num(rows, "epochs") if rows and all(r["epochs"] for r in rows) else list(range(len(rows)))
    ax.plot(x, _num(rows, "normalized_mcmc"), marker="o", label="MCMC")
    ax.plot(x, _num(rows, "normalized_annealer"), marker="s", label="annealer")
    ax.set_xlabel("training epochs")
    ax.set_ylabel("valleys / patterns")
    ax.legend()
    fig.tight_layout()
    _save(fig, out_path)


_HIST_LABELS = {"hist_mcmc": "energy", "hist_annealer": "energy", "hist_e_act": "E_act", "hist_width": "width"}


def plot_run(run_dir) -> list:
    """Render every recognised CSV under `run_dir` next to it; returns the SVG paths."""
    run_dir = Path(run_dir)
    made = []
    for p in sorted(run_dir.rglob("*.csv")):
        target = p.with_suffix(".svg")
        if p.name == "metrics.csv":
            plot_metrics(p, target)
        elif p.name == "sweep_scale.csv":
            plot_sweep(p, target)
        elif p.name == "counts.csv":
            plot_counts(p, target)
        elif p.stem in _HIST_LABELS:
            plot_histogram(p, target, _HIST_LABELS[p.stem])
        else:
            continue
        made.append(target)
    return made
