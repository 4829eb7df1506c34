"""Figure rendering for grid reports and episode traces.

Written next to the delimited output; everything uses the Agg backend so the
CLI works headless.
"""

from __future__ import annotations

import os

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import EpisodeTrace, aggregate_grid  # noqa: E402


def render_grid_figures(rows, outdir) -> list:
    """reward.png and action_prediction.png: metric vs. actual stay, one curve
    per (lambda, design stay) cell, error bars over seeds."""
    summary = aggregate_grid(rows)
    paths = []
    for metric, err, ylabel, fname in [
            ("r_avg_mean", "r_avg_stderr", "mean reward per move", "reward.png"),
            ("ap_avg_mean", None, "mean P(opponent action)", "action_prediction.png")]:
        fig, ax = plt.subplots(figsize=(6, 4))
        curves = {}
        for row in summary:
            curves.setdefault((row["lambda"], row["stay_design"]), []).append(row)
        for (lam, stay), pts in sorted(curves.items()):
            pts.sort(key=lambda r: r["stay_actual"])
            x = [p["stay_actual"] for p in pts]
            y = [p[metric] for p in pts]
            yerr = [p[err] for p in pts] if err else None
            ax.errorbar(x, y, yerr=yerr, marker="o", capsize=3,
                        label=f"lambda={lam}, stay={stay}")
        ax.set_xlabel("actual stay probability")
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(outdir, fname)
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths


def render_trace_figures(trace: EpisodeTrace, outdir, window: int = 500) -> list:
    """Running mean reward and the machine-belief trajectory."""
    paths = []
    rewards = trace.rewards
    w = max(1, min(window, len(rewards)))
    running = np.convolve(rewards, np.ones(w) / w, mode="valid")

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(len(running)) + w, running)
    ax.axhline(0.0, color="gray", lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel(f"reward (window {w})")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = os.path.join(outdir, "reward_running_mean.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    step = max(1, len(trace) // 2000)
    t = np.arange(0, len(trace), step)
    for i in range(trace.machine_beliefs.shape[1]):
        ax.plot(t, trace.machine_beliefs[::step, i], label=f"policy {i}", lw=0.9)
    ax.set_xlabel("step")
    ax.set_ylabel("machine belief mass")
    ax.set_ylim(0, 1)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(outdir, "belief_trajectory.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    paths.append(path)
    return paths
