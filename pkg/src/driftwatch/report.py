"""Figures for a detection run, rendered off-screen with matplotlib."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PHASES = ("preprocess", "detect", "investigate", "update")


def _series(stats: Sequence[dict], key: str) -> np.ndarray:
    return np.array([np.nan if s.get(key) is None else s[key] for s in stats], dtype=float)


def plot_loss(stats: Sequence[dict], path: os.PathLike, alerted: Sequence[int] = ()) -> None:
    idx = np.array([s["window_index"] for s in stats])
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.plot(idx, _series(stats, "mean_rl"), marker="o", ms=3, label="mean RL")
    ax.plot(idx, _series(stats, "sigma"), ls="--", label="threshold")
    for w in alerted:
        ax.axvspan(w - 0.4, w + 0.4, color="tab:red", alpha=0.15, lw=0)
    ax.set_xlabel("window")
    ax.set_ylabel("reconstruction loss")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_node_counts(stats: Sequence[dict], path: os.PathLike) -> None:
    idx = np.array([s["window_index"] for s in stats])
    fig, ax = plt.subplots(figsize=(7, 3.2))
    for key, label in (("anomalous", "AN"), ("suspicious", "SN"),
                       ("rehearsal", "RN"), ("malicious", "MN")):
        ax.plot(idx, _series(stats, key), marker=".", label=label)
    ax.plot(idx, _series(stats, "pool_size"), color="grey", lw=1, label="RN pool")
    ax.set_xlabel("window")
    ax.set_ylabel("nodes")
    ax.legend(frameon=False, ncol=5, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_timing(stats: Sequence[dict], path: os.PathLike) -> None:
    idx = np.array([s["window_index"] for s in stats])
    bottom = np.zeros(len(stats))
    fig, ax = plt.subplots(figsize=(7, 3.2))
    for phase in PHASES:
        vals = np.array([s["timing"].get(phase, 0.0) for s in stats])
        ax.bar(idx, vals, bottom=bottom, label=phase)
        bottom += vals
    ax.set_xlabel("window")
    ax.set_ylabel("seconds")
    ax.legend(frameon=False, ncol=4, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_figures(stats: Sequence[dict], out_dir: os.PathLike, alerted: Sequence[int] = ()) -> List[Path]:
    """Write the standard figure set and return the file paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not stats:
        return []
    paths = [out / "loss.png", out / "nodes.png", out / "timing.png"]
    plot_loss(stats, paths[0], alerted)
    plot_node_counts(stats, paths[1])
    plot_timing(stats, paths[2])
    return paths
