"""Figure rendering for the report paths; every figure lands next to its CSV."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_curve_plot(points, path: str | Path, title: str = "seen/unseen operating curve") -> None:
    """Unseen accuracy against seen accuracy over the bias sweep."""
    seen = [p[1] for p in points]
    unseen = [p[2] for p in points]
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.plot(seen, unseen, marker=".", lw=1.2)
    ax.set_xlabel("seen accuracy")
    ax.set_ylabel("unseen accuracy")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_train_plot(entries, path: str | Path) -> None:
    """Training loss per epoch, with validation AUC on a twin axis if logged."""
    epochs = [e.epoch for e in entries]
    losses = [e.loss for e in entries]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(epochs, losses, color="tab:blue", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss", color="tab:blue")
    ax.grid(alpha=0.3)
    with_auc = [(e.epoch, e.val_auc) for e in entries if e.val_auc is not None]
    if with_auc:
        ax2 = ax.twinx()
        ax2.plot(*zip(*with_auc), color="tab:orange", marker="o", ms=3, label="val AUC")
        ax2.set_ylabel("val AUC", color="tab:orange")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_ablation_plot(rows, path: str | Path) -> None:
    """Bar chart of validation AUC and best harmonic mean per graph variant."""
    variants = [r[0] for r in rows]
    auc = [r[1] for r in rows]
    hm = [r[2] for r in rows]
    x = np.arange(len(variants))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(x - 0.2, auc, width=0.4, label="val AUC")
    ax.bar(x + 0.2, hm, width=0.4, label="best HM")
    ax.set_xticks(x)
    ax.set_xticklabels(variants)
    ax.set_xlabel("graph variant")
    ax.legend()
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_degree_histogram(degrees, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(degrees, bins=min(50, max(5, int(np.max(degrees)))), color="tab:green")
    ax.set_xlabel("node degree")
    ax.set_ylabel("count")
    ax.set_title("adjacency degree histogram")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_retrieval_plot(entries, path: str | Path, title: str) -> None:
    """Horizontal bar chart of the top-k retrieval scores."""
    ids = [e[0] for e in entries][::-1]
    scores = [e[1] for e in entries][::-1]
    fig, ax = plt.subplots(figsize=(5, 0.4 * len(ids) + 1.2))
    ax.barh(range(len(ids)), scores, color="tab:purple")
    ax.set_yticks(range(len(ids)))
    ax.set_yticklabels(ids, fontsize=7)
    ax.set_xlabel("compatibility score")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
