"""Figure rendering for fronts, trajectories, and savings tables.

All figures are written to files (SVG or PNG by extension) with deterministic
ids and no timestamps, so identical inputs give byte-identical output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "locsched"

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Circle as MplCircle
from matplotlib.patches import Rectangle as MplRectangle

from .geometry import Circle, Rect, Workspace
from .scenario import Scenario

PHASE_COLORS = {0: "#9ecae1", 1: "#4292c6", 2: "#084594"}  # off, boot, on
PHASE_NAMES = {0: "off", 1: "booting", 2: "on"}


def _save(fig, path) -> None:
    fig.savefig(path, metadata={"Date": None}, dpi=150)
    plt.close(fig)


def _draw_shape(ax, shape, **kw):
    if isinstance(shape, Rect):
        ax.add_patch(
            MplRectangle((shape.xmin, shape.ymin), shape.xmax - shape.xmin, shape.ymax - shape.ymin, **kw)
        )
    elif isinstance(shape, Circle):
        ax.add_patch(MplCircle((shape.cx, shape.cy), shape.r, **kw))


def draw_workspace(ax, workspace: Workspace, waypoints: np.ndarray | None = None) -> None:
    b = workspace.bounds
    ax.set_xlim(b.xmin, b.xmax)
    ax.set_ylim(b.ymin, b.ymax)
    ax.set_aspect("equal")
    for ob in workspace.obstacles:
        _draw_shape(ax, ob, facecolor="black", edgecolor="black")
    _draw_shape(ax, workspace.target, facecolor="#74c476", edgecolor="#238b45", alpha=0.8)
    if waypoints is not None and len(waypoints):
        ax.plot(waypoints[:, 0], waypoints[:, 1], ".", color="#08306b", markersize=4, zorder=5)


def plot_trajectories(sc: Scenario, traces: list[list[tuple]], path) -> None:
    """Workspace plus sampled trajectories colored by localization status."""
    fig, ax = plt.subplots(figsize=(6, 6))
    draw_workspace(ax, sc.workspace, sc.waypoints)
    n = sc.plant.n_x
    for rows in traces:
        if not rows:
            continue
        arr = np.array(rows)
        xs, ys, phases = arr[:, 1], arr[:, 2], arr[:, -1].astype(int)
        start = 0
        for k in range(1, len(arr) + 1):
            if k == len(arr) or phases[k] != phases[start]:
                ax.plot(xs[start : k + 1], ys[start : k + 1],
                        color=PHASE_COLORS[int(phases[start])], linewidth=0.7, alpha=0.7)
                start = k
    handles = [plt.Line2D([0], [0], color=c, label=PHASE_NAMES[p]) for p, c in PHASE_COLORS.items()]
    ax.legend(handles=handles, loc="upper right", fontsize=8)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(sc.name)
    _save(fig, path)


def plot_front(front, path) -> None:
    """Projections of the front onto cost-vs-performance planes."""
    names = [o.name for o in front.objectives]
    vm = front.vertex_matrix()
    cost_names = [n for n in names if n in ("energy", "duration")] or [names[-1]]
    perf_names = [n for n in names if n in ("ptarg", "pcoll")] or [names[0]]
    pairs = [(p, c) for c in cost_names for p in perf_names]
    fig, axes = plt.subplots(1, len(pairs), figsize=(4 * len(pairs), 3.6), squeeze=False)
    for ax, (px, py) in zip(axes[0], pairs):
        xi, yi = names.index(px), names.index(py)
        order = np.argsort(vm[:, xi])
        ax.plot(vm[order, xi], vm[order, yi], "o-", color="#08519c", markersize=5)
        for k in range(len(vm)):
            ax.annotate(str(k), (vm[k, xi], vm[k, yi]), fontsize=7, xytext=(3, 3),
                        textcoords="offset points")
        for base, mark in (("on", "^"), ("off", "v")):
            if base in front.baselines:
                bx, by = front.baselines[base].get(px), front.baselines[base].get(py)
                if bx is not None and by is not None:
                    ax.plot([bx], [by], mark, color="#a63603", markersize=7)
                    ax.annotate(base, (bx, by), fontsize=7, color="#a63603",
                                xytext=(3, -8), textcoords="offset points")
        ax.set_xlabel(px)
        ax.set_ylabel(py)
        ax.grid(alpha=0.3)
    fig.suptitle(f"trade-off front (gap {front.refinement_gap:.2e})", fontsize=9)
    fig.tight_layout()
    _save(fig, path)


def plot_savings(rows: list[dict], path) -> None:
    """Bar chart of percentage savings per front vertex."""
    keys = [k for k in rows[0] if k.startswith("saved_") and any(r[k] != "" for r in rows)]
    fig, ax = plt.subplots(figsize=(6, 3.6))
    idx = np.arange(len(rows))
    width = 0.8 / max(len(keys), 1)
    for k, key in enumerate(keys):
        vals = [r[key] if r[key] != "" else 0.0 for r in rows]
        ax.bar(idx + k * width, vals, width, label=key.replace("saved_", "").replace("_pct", ""))
    ax.set_xticks(idx + 0.4 - width / 2)
    ax.set_xticklabels([str(r["vertex"]) for r in rows], fontsize=8)
    ax.set_xlabel("front vertex")
    ax.set_ylabel("saved vs baseline [%]")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    _save(fig, path)
