"""Figure rendering for the CLI report paths (static SVG via matplotlib Agg)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["save_velocity_panels", "save_interp_overlay", "save_sweep_curves"]

_BIN_MS = 4.0


def save_velocity_panels(samples, out_path):
    """Predicted-vs-target velocity traces, one row per sample, vx/vy columns.

    ``samples`` is a list of (label, pred (T,2), target (T,2)) tuples.
    """
    rows = len(samples)
    fig, axes = plt.subplots(rows, 2, figsize=(9, 2.2 * rows), sharex=True, squeeze=False)
    t = None
    for r, (label, pred, target) in enumerate(samples):
        T = pred.shape[0]
        if t is None or t.shape[0] != T:
            t = np.arange(T) * _BIN_MS / 1000.0
        for d, name in enumerate(("vx", "vy")):
            ax = axes[r, d]
            ax.plot(t, target[:, d], lw=0.9, color="0.3", label="target")
            ax.plot(t, pred[:, d], lw=0.9, color="tab:red", label="predicted")
            ax.set_ylabel(f"{label}\n{name}" if d == 0 else name)
            ax.grid(alpha=0.25)
            if r == 0 and d == 0:
                ax.legend(fontsize=8, loc="upper right")
    for ax in axes[-1]:
        ax.set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def save_interp_overlay(velocities, recon, stride, out_path, max_bins=2048):
    """Original velocities with their stride-step linear reconstruction."""
    T = min(velocities.shape[0], max_bins)
    t = np.arange(T) * _BIN_MS / 1000.0
    fig, axes = plt.subplots(2, 1, figsize=(9, 4.4), sharex=True)
    for d, name in enumerate(("vx", "vy")):
        ax = axes[d]
        ax.plot(t, velocities[:T, d], lw=0.9, color="0.3", label="original")
        ax.plot(t, recon[:T, d], lw=0.9, color="tab:blue",
                label=f"{stride}-step interpolation")
        ax.plot(t[::stride], velocities[:T:stride, d], ".", ms=3, color="tab:blue")
        ax.set_ylabel(name)
        ax.grid(alpha=0.25)
    axes[0].legend(fontsize=8, loc="upper right")
    axes[1].set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def save_sweep_curves(rows, out_path):
    """Keypoints vs dense operations and R^2 from sweep result dicts."""
    kp = [r["keypoints"] for r in rows]
    fig, ax1 = plt.subplots(figsize=(6, 3.6))
    ax1.plot(kp, [r["dense"] for r in rows], "o-", color="tab:blue", label="dense/step")
    ax1.set_xlabel("keypoints")
    ax1.set_ylabel("dense ops per step", color="tab:blue")
    ax1.set_xscale("log", base=2)
    ax2 = ax1.twinx()
    ax2.plot(kp, [r["r2"] for r in rows], "s--", color="tab:red", label="R2")
    ax2.set_ylabel("R2", color="tab:red")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
