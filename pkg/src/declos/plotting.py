"""Static figures for traces and suites (matplotlib, Agg backend)."""
from __future__ import annotations

import math
from itertools import combinations
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from .geometry import AARect, InflationSpec, inf_norm_dist, inflate_obstacles  # noqa: E402
from .sim import EVENT_BRAKE, SimTrace  # noqa: E402


def _draw_world(ax, bounds: AARect, physical: Sequence[AARect], planning: Sequence[AARect]):
    for r in planning:
        ax.add_patch(Rectangle((r.xmin, r.ymin), r.width, r.height, facecolor="0.85", edgecolor="none"))
    for r in physical:
        ax.add_patch(Rectangle((r.xmin, r.ymin), r.width, r.height, facecolor="0.35", edgecolor="black", lw=0.5))
    ax.set_xlim(bounds.xmin, bounds.xmax)
    ax.set_ylim(bounds.ymin, bounds.ymax)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")


def _world_from_trace(trace: SimTrace):
    sc = trace.header["scenario"]
    p = sc["params"]
    bounds = AARect(*sc["workspace"]["bounds_m"])
    physical = trace.physical_obstacles()
    spec = InflationSpec(float(p["delta_m"]), p["inflation"],
                         None if p["cap_length_m"] is None else float(p["cap_length_m"]))
    return bounds, physical, inflate_obstacles(physical, spec)


def plot_trajectories(trace: SimTrace, path) -> Path:
    """Workspace, inflated obstacles, every agent's path, starts (x), goals
    (open circles) and final positions (filled circles)."""
    bounds, physical, planning = _world_from_trace(trace)
    fig, ax = plt.subplots(figsize=(6, 6))
    _draw_world(ax, bounds, physical, planning)
    goals = trace.goals()
    cmap = plt.get_cmap("tab20")
    for n, a in enumerate(trace.agent_ids):
        c = cmap(n % 20)
        xs = [r.positions[a].x for r in trace.ticks]
        ys = [r.positions[a].y for r in trace.ticks]
        ax.plot(xs, ys, color=c, lw=1.2, label=str(a))
        ax.plot(xs[0], ys[0], "x", color=c)
        ax.plot(xs[-1], ys[-1], "o", color=c)
        ax.plot(*goals[a], "o", mfc="none", color=c, ms=9)
    ax.legend(fontsize=6, ncol=2, loc="upper right", title="agent", title_fontsize=6)
    ax.set_title(trace.header["scenario"]["name"])
    return _save(fig, path)


def plot_distances(trace: SimTrace, path) -> Path:
    """Minimum pairwise inf-norm distance over time with delta_min dashed."""
    ids = trace.agent_ids
    ts = [r.t for r in trace.ticks]
    mins = []
    for r in trace.ticks:
        mins.append(min((inf_norm_dist(r.positions[a], r.positions[b]) for a, b in combinations(ids, 2)),
                        default=math.nan))
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(ts, mins, lw=1.0, label="closest pair")
    ax.axhline(trace.delta_min, ls="--", color="black", lw=1.0, label="delta_min")
    brakes = sorted({r.t for r, _ in trace.events(EVENT_BRAKE)})
    if brakes:
        ax.plot(brakes, [trace.delta_min] * len(brakes), "|", color="red", ms=10, label="brake")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("inter-agent distance [m]")
    ax.legend(fontsize=7)
    return _save(fig, path)


def render_svg_frames(trace: SimTrace, out_dir, per: str = "k") -> list[Path]:
    """One SVG per outer iteration (``per='k'``) or per tick (``per='tick'``)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bounds, physical, planning = _world_from_trace(trace)
    goals = trace.goals()
    ticks = trace.ticks
    if per == "k":
        last: dict[int, object] = {}
        for r in ticks:
            last[r.k] = r
        ticks = list(last.values())
    elif per != "tick":
        raise ValueError("per must be 'k' or 'tick'")
    paths = []
    for r in ticks:
        fig, ax = plt.subplots(figsize=(5, 5))
        _draw_world(ax, bounds, physical, planning)
        colors = {a: plt.get_cmap("tab10")(gi % 10) for gi, s in enumerate(r.partition) for a in s}
        for a in trace.agent_ids:
            ax.plot(*goals[a], "o", mfc="none", color=colors[a], ms=7)
            ax.plot(*r.positions[a], "o", color=colors[a], ms=6)
            ax.annotate(str(a), r.positions[a], fontsize=6, xytext=(3, 3), textcoords="offset points")
        ax.set_title(f"t = {r.t:.1f} s, k = {r.k}, {len(r.partition)} subgraph(s)", fontsize=8)
        name = f"frame_k{r.k:04d}.svg" if per == "k" else f"frame_t{r.tick:06d}.svg"
        paths.append(_save(fig, out / name))
    return paths


def plot_suite(summary: Sequence[dict], out_dir) -> list[Path]:
    """Bar charts (mean with std error bars) per mode and agent count for
    time-to-goal, path length and brake events.  ``summary`` rows are the
    aggregate rows written by the suite command."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    modes = sorted({r["mode"] for r in summary})
    ns = sorted({int(r["n_agents"]) for r in summary})
    paths = []
    for key, label, fname in (("time_to_goal", "mean time to goal [s]", "suite_time_to_goal.png"),
                              ("path_length", "mean path length [m]", "suite_path_length.png"),
                              ("brake_events", "brake events per run", "suite_brakes.png")):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        width = 0.8 / max(len(modes), 1)
        for mi, m in enumerate(modes):
            rows = {int(r["n_agents"]): r for r in summary if r["mode"] == m}
            xs = [i + mi * width for i in range(len(ns))]
            ys = [float(rows[n][f"{key}_mean"]) if n in rows else math.nan for n in ns]
            es = [float(rows[n][f"{key}_std"]) if n in rows else 0.0 for n in ns]
            ax.bar(xs, ys, width, yerr=es, capsize=3, label=m)
        ax.set_xticks([i + width * (len(modes) - 1) / 2 for i in range(len(ns))])
        ax.set_xticklabels([str(n) for n in ns])
        ax.set_xlabel("number of agents")
        ax.set_ylabel(label)
        ax.legend(fontsize=7)
        paths.append(_save(fig, out / fname))
    return paths


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
