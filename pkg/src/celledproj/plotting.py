"""Figures written next to the CSV/markdown reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from celledproj.harness import CLASSIFIER_PARAM  # noqa: E402

DEFAULT_RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "savefig.dpi": 150,
    # fixed metadata keeps repeated renders byte-stable
    "svg.hashsalt": "celledproj",
}


def _subrange(cell) -> str:
    return cell.classifier_params.split(";")[0].split("=", 1)[1]


def grid_matrix(report):
    """Accuracy matrix with feature rows and (classifier, subrange) columns."""
    rows, cols = [], []
    for c in report.cells:
        if c.feature not in rows:
            rows.append(c.feature)
        key = (c.classifier, _subrange(c))
        if key not in cols:
            cols.append(key)
    acc = np.full((len(rows), len(cols)), np.nan)
    for c in report.cells:
        acc[rows.index(c.feature), cols.index((c.classifier, _subrange(c)))] = c.accuracy
    return rows, cols, acc


def plot_grid(report, path, title: str = "Recognition accuracy (%)"):
    """Heatmap of the best-of-subrange accuracies, annotated with values."""
    rows, cols, acc = grid_matrix(report)
    with plt.rc_context(DEFAULT_RC):
        fig, ax = plt.subplots(figsize=(1.0 + 0.75 * max(len(cols), 1), 1.2 + 0.45 * max(len(rows), 1)))
        im = ax.imshow(acc, cmap="viridis", vmin=0, vmax=100, aspect="auto")
        ax.set_xticks(range(len(cols)))
        ax.set_xticklabels([f"{n.upper()}\n{CLASSIFIER_PARAM[n]} {s}" for n, s in cols], rotation=0)
        ax.set_yticks(range(len(rows)))
        ax.set_yticklabels(rows)
        for i in range(len(rows)):
            for j in range(len(cols)):
                if not np.isnan(acc[i, j]):
                    ax.text(j, i, f"{acc[i, j]:.1f}", ha="center", va="center", fontsize=7,
                            color="white" if acc[i, j] < 60 else "black")
        ax.set_title(title)
        fig.colorbar(im, ax=ax, fraction=0.03, pad=0.02)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None} if str(path).endswith(".png") else None)
        plt.close(fig)
    return path


def plot_confusion(cell, path):
    cm = cell.confusion
    with plt.rc_context(DEFAULT_RC):
        fig, ax = plt.subplots(figsize=(4, 3.6))
        ax.imshow(cm, cmap="Blues")
        ax.set_xlabel("predicted class")
        ax.set_ylabel("true class")
        ax.set_xticks(range(cm.shape[1]))
        ax.set_yticks(range(cm.shape[0]))
        ax.set_title(f"{cell.feature} / {cell.classifier} {cell.classifier_params}\n"
                     f"accuracy {cell.accuracy:.2f}%")
        for (i, j), v in np.ndenumerate(cm):
            if v:
                ax.text(j, i, str(v), ha="center", va="center", fontsize=6)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None} if str(path).endswith(".png") else None)
        plt.close(fig)
    return path


def plot_bench(rows, path):
    """Horizontal bars of nanoseconds per image (extractors) or per query (KNN)."""
    with plt.rc_context(DEFAULT_RC):
        fig, ax = plt.subplots(figsize=(5, 0.4 * max(len(rows), 1) + 1))
        names = [f"{r.name} (/{r.unit})" for r in rows]
        ax.barh(range(len(rows)), [r.ns_per_item / 1e3 for r in rows], color="tab:blue")
        ax.set_yticks(range(len(rows)))
        ax.set_yticklabels(names)
        ax.invert_yaxis()
        ax.set_xscale("log")
        ax.set_xlabel("microseconds (median of runs)")
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None} if str(path).endswith(".png") else None)
        plt.close(fig)
    return path
