"""Report figures (PNG) for suites, episodes and training logs."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_suite(agg: list[dict], path) -> Path:
    """Mean steps (with std bars) per planner, grouped by map size class."""
    classes = [c for c in ("small", "medium", "large") if any(a["size_class"] == c for a in agg)]
    planners = sorted({a["planner"] for a in agg})
    lookup = {(a["planner"], a["size_class"]): a for a in agg}
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.2))
        width = 0.8 / max(len(planners), 1)
        x = np.arange(len(classes))
        for k, p in enumerate(planners):
            means = [float(lookup[(p, c)]["steps_mean"]) if (p, c) in lookup else np.nan for c in classes]
            stds = [float(lookup[(p, c)]["steps_std"]) if (p, c) in lookup else 0.0 for c in classes]
            ax.bar(x + (k - (len(planners) - 1) / 2) * width, means, width, yerr=stds, capsize=2, label=p)
        ax.set_xticks(x, classes)
        ax.set_ylabel("steps to completion")
        ax.legend(ncol=min(len(planners), 3), frameon=False)
        return _save(fig, path)


def plot_curves(curves: dict, path, horizon: int = 15) -> Path:
    """Mean exploration rate against planning cycles, one line per planner."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        for name, runs in sorted(curves.items()):
            n = max(len(c) for c in runs)
            padded = np.array([list(c) + [c[-1]] * (n - len(c)) for c in runs])
            ax.plot(np.arange(n) * horizon, padded.mean(axis=0), label=name)
        ax.axhline(0.99, color="0.5", lw=0.8, ls="--")
        ax.set_xlabel("env steps (cycle starts)")
        ax.set_ylabel("exploration rate")
        ax.set_ylim(0, 1.02)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_training(log_path, path) -> Path:
    """Mean steps and the mutual-information estimate over training epochs."""
    with open(log_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    epoch = np.array([int(r["epoch"]) for r in rows])
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(9.0, 2.8))
        for ax, key, label in zip(
            axes, ("mean_steps", "mi_estimate", "loss_mi"), ("mean steps", "MI estimate", "contrastive loss")
        ):
            y = np.array([float(r[key]) for r in rows])
            ax.plot(epoch, y, lw=0.8, color="0.6")
            if len(y) >= 10:
                k = max(len(y) // 20, 5)
                ax.plot(epoch[k - 1 :], np.convolve(y, np.ones(k) / k, mode="valid"), lw=1.4)
            ax.set_xlabel("epoch")
            ax.set_title(label)
        fig.tight_layout()
        return _save(fig, path)


def plot_trace(img: np.ndarray, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 4.0 * img.shape[0] / img.shape[1]))
        ax.imshow(img, interpolation="nearest")
        ax.set_axis_off()
        return _save(fig, path)
