"""Figure rendering for the CLI report paths (file output only)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .scenario import SweepResult  # noqa: E402
from .sim import SimStats  # noqa: E402


def plot_sweep(result: SweepResult, path: str) -> None:
    """Delay bound versus loss probability, one line per queue; unstable or
    infinite points are left out of the lines."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    names = sorted({r.queue for r in result.rows})
    for name in names:
        rows = [r for r in result.for_queue(name) if r.stable and math.isfinite(r.bound)]
        ax.plot([r.p for r in rows], [r.bound for r in rows], marker=".", label=name)
    ax.set_xlabel("loss probability p")
    ax.set_ylabel("delay bound")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_curves(samples: dict[str, tuple], path: str, title: str | None = None) -> None:
    """Overlay of named curve samples (t, value); +inf values are clipped."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, (times, values) in samples.items():
        pts = [(t, v) for t, v in zip(times, values) if math.isfinite(v)]
        ax.plot([t for t, _ in pts], [v for _, v in pts], label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("bits")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_delays(stats: SimStats, bounds: dict[str, float], path: str) -> None:
    """Per-queue delay histograms with the analytic bound marked."""
    queues = [name for name, qs in stats.queues.items() if qs.delays]
    n = max(1, len(queues))
    fig, axes = plt.subplots(n, 1, figsize=(6.0, 2.5 * n), squeeze=False)
    for ax, name in zip(axes[:, 0], queues):
        qs = stats.queues[name]
        ax.hist(qs.delays, bins=50, alpha=0.8)
        bound = bounds.get(name)
        if bound is not None and math.isfinite(bound):
            ax.axvline(bound, color="red", linestyle="--", label=f"bound {bound:.4g}")
            ax.legend()
        ax.set_ylabel(name)
    axes[-1, 0].set_xlabel("packet delay")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
