"""Figures written next to the CSV reports of ``simulate`` and ``sweep``."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "figure.dpi": 120,
    "savefig.dpi": 150,
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 10,
    "legend.fontsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.4,
    "savefig.bbox": "tight",
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_particles(initial, final, path, final_time: float | None = None) -> Path:
    """Initial and final particle positions (first two coordinates; 1-D on a line)."""
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.8), sharex=True, sharey=True)
        for ax, ens, title in (
            (axes[0], initial, "initial"),
            (axes[1], final, "final" if final_time is None else f"t = {final_time:g}"),
        ):
            pos = ens.positions
            y = pos[:, 1] if ens.dimension > 1 else np.zeros(ens.count)
            ax.scatter(pos[:, 0], y, s=10, color="k")
            ax.set_title(title)
            ax.set_xlabel("x0")
            ax.set_aspect("equal", adjustable="box")
        axes[0].set_ylabel("x1" if initial.dimension > 1 else "")
        return _save(fig, path)


def plot_energy(record, path) -> Path:
    """Energy and L2(rho0) gradient norm against time."""
    t = np.concatenate([[0.0], record.times])
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(6, 3.6))
        ax.plot(t, record.energies, color="C0", label="energy")
        ax.set_xlabel("t")
        ax.set_ylabel("energy", color="C0")
        ax2 = ax.twinx()
        ax2.plot(t, record.grad_norms, color="C3", label="gradient norm")
        ax2.set_ylabel("gradient norm", color="C3")
        if np.all(record.grad_norms > 0):
            ax2.set_yscale("log")
        ax2.spines["right"].set_visible(True)
        return _save(fig, path)


def plot_convergence(report, path) -> Path:
    """Log-log terminal error against tau with a slope-2 guide and bound overlay."""
    pts = np.array(report.points())
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5, 4))
        if len(pts):
            ax.loglog(pts[:, 0], pts[:, 1], "o-", color="k", label=f"observed (p = {report.order:.3f})")
            guide = pts[0, 1] * (pts[:, 0] / pts[0, 0]) ** 2
            ax.loglog(pts[:, 0], guide, "--", color="0.5", label="slope 2")
        overlay = [(float(r.tau), r.bound_overlay) for r in report.rows if r.bound_overlay is not None]
        if overlay:
            ov = np.array(overlay)
            ax.loglog(ov[:, 0], ov[:, 1], ":", color="C3", label="a-priori bound")
        ax.set_xlabel("tau")
        ax.set_ylabel("terminal L2(rho0) error")
        ax.legend()
        return _save(fig, path)
