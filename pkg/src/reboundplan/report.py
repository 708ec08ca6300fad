"""Figure rendering for the plan and bench report paths.

Every CLI command that writes delimited output drops matching PNG
figures next to it: a top-down scene view with the trajectory and its
velocity profile for single plans, and summary distributions for
benchmark sweeps.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle

from .bspline import UniformBSpline


def save_trajectory_figure(
    path,
    boxes,
    trajectories,
    start=None,
    goal=None,
    guide=None,
    title: str | None = None,
) -> None:
    """Top-down scene plus velocity profile of the final trajectory."""
    trajectories = [t for t in trajectories if t is not None]
    fig, (ax, axv) = plt.subplots(
        2, 1, figsize=(9, 8), gridspec_kw={"height_ratios": [3, 1]}
    )
    for _, lo, hi in _normalize_boxes(boxes):
        ax.add_patch(
            Rectangle(
                (lo[0], lo[1]), hi[0] - lo[0], hi[1] - lo[1],
                facecolor="0.55", edgecolor="0.35", linewidth=0.3,
            )
        )
    if guide is not None and len(guide):
        g = np.atleast_2d(guide)
        ax.plot(g[:, 0], g[:, 1], ":", color="tab:green", lw=1.0, label="guide path")
    for i, traj in enumerate(trajectories):
        lo_t, hi_t = traj.domain()
        ts = np.linspace(lo_t, hi_t, 400)
        pos = traj.evaluate(ts)
        label = "trajectory" if len(trajectories) == 1 else f"plan {i}"
        ax.plot(pos[:, 0], pos[:, 1], lw=1.6, label=label)
        ax.plot(traj.ctrl_pts[:, 0], traj.ctrl_pts[:, 1], ".", ms=3, color="0.2")
    if start is not None:
        ax.plot(*np.asarray(start)[:2], "^", color="tab:blue", ms=9, label="start")
    if goal is not None:
        ax.plot(*np.asarray(goal)[:2], "*", color="tab:red", ms=12, label="goal")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(loc="upper right", fontsize=8)
    if title:
        ax.set_title(title)

    if trajectories:
        final = trajectories[-1]
        lo_t, hi_t = final.domain()
        ts = np.linspace(lo_t, hi_t, 400)
        speed = np.linalg.norm(final.evaluate(ts, 1), axis=1)
        axv.plot(ts - lo_t, speed, lw=1.2)
        axv.set_xlabel("t [s]")
        axv.set_ylabel("speed [m/s]")
        axv.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def _normalize_boxes(boxes):
    out = []
    for b in boxes:
        if not isinstance(b, (list, tuple)):
            continue
        if len(b) == 3 and b[0] == "box":
            out.append(("box", b[1], b[2]))
        elif len(b) == 2 and b[0] == "pt":
            p = np.asarray(b[1], dtype=float)
            out.append(("box", p - 0.05, p + 0.05))
        elif len(b) == 2:
            out.append(("box", b[0], b[1]))
    return out


def save_benchmark_figure(path, rows) -> None:
    """Distribution summary of one benchmark sweep."""
    ok = [r for r in rows if r.success]
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    if ok:
        axes[0].hist([r.function_evaluations for r in ok], bins=20, color="tab:blue")
        axes[1].hist([r.optimize_ms for r in ok], bins=20, color="tab:orange")
        sc = axes[2].scatter(
            [r.length for r in ok], [r.energy for r in ok],
            c=[r.flight_time for r in ok], cmap="viridis", s=18,
        )
        fig.colorbar(sc, ax=axes[2], label="flight time [s]")
    axes[0].set_xlabel("objective evaluations per plan")
    axes[1].set_xlabel("optimize time per plan [ms]")
    axes[2].set_xlabel("length [m]")
    axes[2].set_ylabel("jerk energy")
    rate = sum(r.success for r in rows) / max(len(rows), 1)
    fig.suptitle(f"{len(rows)} runs, success rate {rate:.2f}")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
