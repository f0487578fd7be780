"""Report figures written next to the tabular evaluation output."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evalkit import LABEL_NAMES, LabelStats  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "svg.hashsalt": "alignloop",
}
COLORS = {"full": "#1b7837", "partial": "#f1a340", "none": "#998ec3"}
_ORDER = ("full", "partial", "none")


def conversion_figure(stats: LabelStats, path: str | Path) -> Path:
    """Counts (all vs final) and conversion rate per alignment label."""
    labels = [l for l in _ORDER if l in stats.count_all]
    path = Path(path)
    with plt.rc_context(RC):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(7.0, 2.8))
        xs = range(len(labels))
        ax0.bar([x - 0.2 for x in xs], [stats.count_all[l] for l in labels], 0.4,
                color=[COLORS[l] for l in labels], alpha=0.45, label="all candidates")
        ax0.bar([x + 0.2 for x in xs], [stats.count_final[l] for l in labels], 0.4,
                color=[COLORS[l] for l in labels], label="final support")
        ax0.set_xticks(list(xs), [LABEL_NAMES[l] for l in labels])
        ax0.set_ylabel("documents")
        ax0.legend(frameon=False)
        rates = [stats.rate(l) for l in labels]
        ax1.bar(list(xs), rates, 0.6, color=[COLORS[l] for l in labels])
        for x, r in zip(xs, rates):
            ax1.text(x, r, f"{r:.2f}", ha="center", va="bottom")
        ax1.set_xticks(list(xs), [LABEL_NAMES[l] for l in labels])
        ax1.set_ylim(0, 1.05)
        ax1.set_ylabel("conversion rate")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def metrics_figure(aggregate: dict, path: str | Path) -> Path:
    keys = [k for k in aggregate if 0.0 <= aggregate[k] <= 1.0 and k != "iterations_used"]
    path = Path(path)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(max(3.0, 0.6 * len(keys) + 1), 2.8))
        ax.bar(range(len(keys)), [aggregate[k] for k in keys], 0.6, color="#4d4d4d")
        ax.set_xticks(range(len(keys)), keys, rotation=35, ha="right")
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("mean score")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
