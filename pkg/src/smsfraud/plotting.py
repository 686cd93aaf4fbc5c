"""Figures written next to the tabular reports."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import VARIANT_ORDER, EvaluationReport  # noqa: E402

# fixed metadata keeps PNG bytes identical across reruns
_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}


def _style(ax):
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.grid(axis="y", alpha=0.3)


def _grouped(ax, groups, series, values, ylabel):
    width = 0.8 / max(len(series), 1)
    x = np.arange(len(groups))
    for i, s in enumerate(series):
        ax.bar(x + (i - (len(series) - 1) / 2) * width, values[i], width, label=s)
    ax.set_xticks(x)
    ax.set_xticklabels(groups)
    ax.set_ylabel(ylabel)
    _style(ax)


def _variants(reports):
    present = {r.variant for r in reports}
    return [v for v in VARIANT_ORDER if v in present]


def _datasets(reports, order):
    present = {r.dataset for r in reports}
    return [d for d in order if d in present] + sorted(present - set(order))


def accuracy_figure(reports: Sequence[EvaluationReport], path, dataset_order=()) -> Path:
    """Grouped bars of test accuracy per dataset and model variant."""
    by = {(r.dataset, r.variant): r for r in reports}
    datasets = _datasets(reports, list(dataset_order))
    variants = _variants(reports)
    vals = [[by[(d, v)].metrics.accuracy if (d, v) in by else np.nan for d in datasets] for v in variants]
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(datasets)), 4))
    _grouped(ax, datasets, variants, vals, "accuracy")
    finite = [x for row in vals for x in row if np.isfinite(x)]
    ax.set_ylim(max(0.0, min(finite, default=0.0) - 0.05), 1.0)
    ax.legend(ncol=4, fontsize=8, frameon=False, loc="lower left")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def rates_figure(reports: Sequence[EvaluationReport], path, dataset_order=()) -> Path:
    """Two panels (FP % and FN %) per dataset and model variant."""
    by = {(r.dataset, r.variant): r for r in reports}
    datasets = _datasets(reports, list(dataset_order))
    variants = _variants(reports)
    fig, axes = plt.subplots(2, 1, figsize=(max(6, 1.6 * len(datasets)), 6), sharex=True)
    for ax, attr, title in ((axes[0], "fp_pct", "FP %"), (axes[1], "fn_pct", "FN %")):
        vals = [[getattr(by[(d, v)], attr) if (d, v) in by else np.nan for d in datasets] for v in variants]
        _grouped(ax, datasets, variants, vals, title)
        ax.axhline(5.0, color="k", lw=0.8, ls="--")
    axes[0].legend(ncol=4, fontsize=8, frameon=False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def ablation_figure(rows, path) -> Path:
    """Accuracy delta (second arm minus first) per cell; ``rows`` are (label, delta or None)."""
    labels = [r[0] for r in rows]
    deltas = [np.nan if r[1] is None else r[1] for r in rows]
    fig, ax = plt.subplots(figsize=(max(5, 0.6 * len(rows)), 3.5))
    colors = ["tab:red" if (d == d and d < 0) else "tab:green" for d in deltas]
    ax.bar(np.arange(len(rows)), deltas, color=colors)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xticks(np.arange(len(rows)))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=8)
    ax.set_ylabel("accuracy delta")
    _style(ax)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path
