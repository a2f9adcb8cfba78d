"""Matplotlib renderings written next to the delimited outputs.

Every CLI command that emits CSV or JSON also renders the matching
figure: loss traces as line plots, map distributions as before/after
scatters, and evaluation reports as per-metric bar charts.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_trace(traces: dict, path) -> None:
    """Line plot of per-epoch training losses, one series per label."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, values in traces.items():
        ax.plot(range(1, len(values) + 1), values, label=label, linewidth=1.5)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.set_yscale("log")
    ax.grid(True, which="both", alpha=0.3)
    if traces:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_points(pairs, path, title: str = "") -> None:
    """Side-by-side scatter of raw 2-D inputs and their mapped images."""
    v = np.array([p[0] for p in pairs])
    u = np.array([p[1] for p in pairs])
    fig, (ax_in, ax_out) = plt.subplots(1, 2, figsize=(9.0, 4.2))
    ax_in.scatter(v[:, 0], v[:, 1], s=3, c="tab:gray")
    ax_in.set_title("raw outputs")
    ax_in.set_xlabel("v1")
    ax_in.set_ylabel("v2")
    ax_out.scatter(u[:, 0], u[:, 1], s=3, c="tab:blue")
    ax_out.set_title(title or "mapped outputs")
    ax_out.set_xlabel("u1")
    ax_out.set_ylabel("u2")
    for ax in (ax_in, ax_out):
        ax.set_aspect("equal", adjustable="datalim")
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_report(rows, path) -> None:
    """Horizontal bar chart per metric for the evaluated methods."""
    methods = [r.method for r in rows]
    metrics = [
        ("optimality gap", [r.optimality_gap for r in rows], "linear"),
        ("feasibility gap", [r.feasibility_gap for r in rows], "linear"),
        ("time (ms)", [r.time_ms for r in rows], "log"),
    ]
    fig, axes = plt.subplots(1, 3, figsize=(12.0, 0.8 + 0.5 * len(methods)))
    pos = np.arange(len(methods))
    for ax, (name, values, scale) in zip(axes, metrics):
        ax.barh(pos, values, color="tab:blue")
        ax.set_yticks(pos)
        ax.set_yticklabels(methods if ax is axes[0] else [""] * len(methods))
        ax.invert_yaxis()
        ax.set_title(name)
        if scale == "log" and min(values) > 0:
            ax.set_xscale("log")
        ax.grid(True, axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
