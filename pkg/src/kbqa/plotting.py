"""Figures for evaluation reports, rendered off-screen to image files."""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import LEVEL_TITLES, Report  # noqa: E402


def plot_levels(report: Report, path) -> str:
    """Grouped EM/F1 bars (both in percent) per generalization level."""
    rows = report.rows
    labels = [f"{LEVEL_TITLES[r.split]}\n(n={r.count})" for r in rows]
    xs = range(len(rows))
    width = 0.38
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.bar([x - width / 2 for x in xs], [r.em for r in rows], width, label="EM", color="#4c72b0")
    ax.bar([x + width / 2 for x in xs], [100 * r.f1 for r in rows], width, label="F1", color="#dd8452")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels)
    ax.set_ylim(0, 100)
    ax.set_ylabel("score (%)")
    ax.legend(frameon=False, loc="upper right")
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return os.fspath(path)


def plot_bounds(bounds: dict, path) -> str:
    """Lower/accuracy/upper envelopes; ``bounds`` maps a grouping name to a triple."""
    names = sorted(bounds)
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    for i, name in enumerate(names):
        lower, acc, upper = bounds[name]
        ax.vlines(i, lower, upper, color="#555555", linewidth=2)
        ax.plot([i], [acc], "o", color="#c44e52")
        ax.plot([i, i], [lower, upper], "_", color="#555555", markersize=14)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels([n.capitalize() for n in names])
    ax.set_xlim(-0.6, len(names) - 0.4)
    ax.set_ylim(0, 100)
    ax.set_ylabel("EM (%)")
    ax.set_title("robustness bounds", fontsize=10)
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return os.fspath(path)
