"""Run-report post-processing: fingerprints, long-format CSV, figures.

The CSV is long format (strategy, seed, iteration, metric, value), stably
ordered so diffs are meaningful. Figures are rendered next to the CSV: error
and error-quantile curves over the training-set size per strategy, and the
marginal distribution of the selected normalized PDE parameters.
"""

from __future__ import annotations

import copy
import csv
import os

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_VOLATILE_ROUND_KEYS = ("timings",)
_SCALAR_METRICS = ("rmse", "mae", "q50", "q95", "q99", "pearson", "spearman")


def report_fingerprint(report: dict) -> dict:
    """The report minus wall-clock fields; equal fingerprints mean equal runs."""
    clean = copy.deepcopy(report)
    clean.pop("created_at", None)
    for rnd in clean.get("rounds", []):
        for key in _VOLATILE_ROUND_KEYS:
            rnd.pop(key, None)
    return clean


def _rows_for(report: dict):
    strategy = report["strategy"]
    seed = report["seeds"]["train"]
    for rnd in report["rounds"]:
        it = rnd["round"]
        yield (strategy, seed, it, "train_size", rnd["train_size"])
        for name in _SCALAR_METRICS:
            val = rnd["metrics"].get(name)
            if val is not None:
                yield (strategy, seed, it, name, val)
        if rnd.get("trainee_metrics"):
            for name in _SCALAR_METRICS:
                val = rnd["trainee_metrics"].get(name)
                if val is not None:
                    yield (strategy, seed, it, f"trainee_{name}", val)
        if rnd.get("selection"):
            yield (strategy, seed, it, "n_failed_solves",
                   rnd["selection"].get("n_failed_solves", 0))


def export_csv(reports: list[dict], out_path: str) -> int:
    """Write one row per (strategy, seed, iteration, metric). Returns row count."""
    rows = sorted({r for rep in reports for r in _rows_for(rep)},
                  key=lambda r: (r[0], r[1], r[2], r[3]))
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "seed", "iteration", "metric", "value"])
        writer.writerows(rows)
    return len(rows)


def _curves_by_strategy(reports: list[dict], metric: str, source: str = "metrics"):
    """{strategy: (sizes, mean values over seeds)} for one metric."""
    per_strategy: dict = {}
    for rep in reports:
        pts = []
        for rnd in rep["rounds"]:
            block = rnd.get(source) or {}
            if block.get(metric) is not None:
                pts.append((rnd["train_size"], block[metric]))
        if pts:
            per_strategy.setdefault(rep["strategy"], []).append(pts)
    out = {}
    for strat, runs in per_strategy.items():
        sizes = [p[0] for p in runs[0]]
        if all([p[0] for p in r] == sizes for r in runs):
            vals = np.mean([[p[1] for p in r] for r in runs], axis=0)
            out[strat] = (np.array(sizes), vals)
    return out


def render_figures(reports: list[dict], outdir: str) -> list[str]:
    """Render the standard report figures to PNG files; returns their paths."""
    os.makedirs(outdir, exist_ok=True)
    written = []

    curves = _curves_by_strategy(reports, "rmse")
    if curves:
        fig, ax = plt.subplots(figsize=(5.5, 4))
        for strat, (sizes, vals) in sorted(curves.items()):
            ax.plot(sizes, vals, marker="o", label=strat)
        ax.set_xscale("log", base=2)
        ax.set_yscale("log")
        ax.set_xlabel("training trajectories")
        ax.set_ylabel("test RMSE")
        ax.legend()
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        path = os.path.join(outdir, "rmse_over_data.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    styles = {"q50": "-", "q95": "--", "q99": ":"}
    any_q = {q: _curves_by_strategy(reports, q) for q in styles}
    if any(any_q.values()):
        fig, ax = plt.subplots(figsize=(5.5, 4))
        colors = {}
        for q, style in styles.items():
            for strat, (sizes, vals) in sorted(any_q[q].items()):
                if strat not in colors:
                    colors[strat] = ax.plot([], [])[0].get_color()
                label = strat if q == "q50" else None
                ax.plot(sizes, vals, style, color=colors[strat], label=label)
        ax.set_xscale("log", base=2)
        ax.set_yscale("log")
        ax.set_xlabel("training trajectories")
        ax.set_ylabel("per-trajectory RMSE quantiles (50/95/99%)")
        ax.legend()
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        path = os.path.join(outdir, "quantiles_over_data.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    # marginal distribution of selected normalized PDE parameters
    by_strategy: dict = {}
    n_dims = 0
    for rep in reports:
        rows = [row for rnd in rep["rounds"] if rnd.get("selection")
                for row in rnd["selection"].get("pde_normed", [])]
        if rows:
            arr = np.array(rows)
            n_dims = arr.shape[1]
            by_strategy.setdefault(rep["strategy"], []).append(arr)
    if by_strategy and n_dims:
        fig, axes = plt.subplots(1, n_dims, figsize=(3.2 * n_dims, 3.2), squeeze=False)
        bins = np.linspace(0, 1, 11)
        for strat, arrays in sorted(by_strategy.items()):
            stacked = np.vstack(arrays)
            for d in range(n_dims):
                hist, _ = np.histogram(stacked[:, d], bins=bins, density=True)
                centers = 0.5 * (bins[1:] + bins[:-1])
                axes[0, d].plot(centers, hist, marker=".", label=strat)
        for d in range(n_dims):
            axes[0, d].axhline(1.0, color="gray", lw=0.8, ls="--")
            axes[0, d].set_xlabel(f"normalized parameter {d}")
            axes[0, d].set_ylabel("density ratio vs uniform" if d == 0 else "")
        axes[0, 0].legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(outdir, "selected_param_marginals.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
