"""Matplotlib renderings written next to the delimited reports."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .motion import MotionPair, Skeleton, split_pose


def _prepare(path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)


def scaling_figure(rows, path: str):
    """Log-log wall time vs sequence length, one line per method."""
    _prepare(path)
    methods = sorted({r["method"] for r in rows})
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for m in methods:
        pts = sorted((r["length"], r["median_s"]) for r in rows if r["method"] == m)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=m)
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("sequence length L")
    ax.set_ylabel("median wall time [s]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def loss_curves_figure(metrics_rows, path: str):
    _prepare(path)
    terms: dict[str, list] = {}
    for r in metrics_rows:
        if r.get("record") == "loss":
            terms.setdefault(r["term"], []).append((r["step"], r["value"]))
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for term, pts in sorted(terms.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [np.maximum(p[1], 1e-12) for p in pts], label=term)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss term")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def adaptive_weights_figure(metrics_rows, path: str):
    """Trajectory of the learnable fusion scalars over training."""
    _prepare(path)
    series: dict[str, list] = {}
    for r in metrics_rows:
        if r.get("record") == "adaptive":
            series.setdefault(r["term"], []).append((r["epoch"], r["value"]))
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for term, pts in sorted(series.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=term.split("blocks.")[-1])
    ax.set_xlabel("epoch")
    ax.set_ylabel("fusion scalar value")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def trajectory_figure(pair: MotionPair, skeleton: Skeleton, path: str):
    """Top-down root and foot paths for both persons."""
    _prepare(path)
    J = skeleton.n_joints
    fig, ax = plt.subplots(figsize=(5.2, 5.2))
    colors = ("tab:blue", "tab:orange")
    for k, color in enumerate(colors):
        jg, _, _, _ = split_pose(pair.persons[k], J)
        pts = jg.reshape(pair.frames, J, 3)
        ax.plot(pts[:, 0, 0], pts[:, 0, 1], color=color, label=f"person {'ab'[k]} root")
        for f in skeleton.feet:
            ax.plot(pts[:, f, 0], pts[:, f, 1], color=color, alpha=0.35, lw=0.8)
        ax.scatter(pts[0, 0, 0], pts[0, 0, 1], color=color, marker="s", s=30)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(f"label {pair.label}")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
