"""Kinematics, goal tests, simulation traces and the metrics computed from them.

Safety distances are inf-norm; path lengths are Euclidean.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

from .geometry import AARect, Point2, euclid_dist, inf_norm_dist

TRACE_SCHEMA = "declos-trace/1"

EVENT_COMMIT = "Commit"
EVENT_BRAKE = "BrakeEvent"
EVENT_GOAL = "GoalReached"


class TraceFormatError(ValueError):
    pass


def step_agent(position, target, v_max: float, dt: float) -> Point2:
    """Single-integrator move toward ``target`` by at most ``v_max * dt``.

    A target within reach (up to a 1e-9 relative slack for rounding) is hit
    exactly.
    """
    if not (v_max > 0 and dt > 0):
        raise ValueError("v_max and dt must be positive")
    reach = v_max * dt
    dx = target[0] - position[0]
    dy = target[1] - position[1]
    dist = math.hypot(dx, dy)
    if dist <= reach * (1 + 1e-9):
        return Point2(float(target[0]), float(target[1]))
    s = reach / dist
    return Point2(position[0] + dx * s, position[1] + dy * s)


def at_goal(position, goal, eps: float) -> bool:
    """Closed goal test: inf-norm distance at most ``eps / 2``."""
    if not eps > 0:
        raise ValueError("goal tolerance must be positive")
    return inf_norm_dist(position, goal) <= eps / 2


@dataclass
class TickRecord:
    tick: int
    t: float
    k: int
    positions: dict[int, Point2]
    partition: list[list[int]]
    events: list[dict] = field(default_factory=list)

    def to_dict(self, agent_ids: Sequence[int]) -> dict:
        return {
            "type": "tick",
            "tick": self.tick,
            "t": self.t,
            "k": self.k,
            "positions": [[self.positions[a].x, self.positions[a].y] for a in agent_ids],
            "partition": self.partition,
            "events": self.events,
        }

    @classmethod
    def from_dict(cls, d: dict, agent_ids: Sequence[int]) -> "TickRecord":
        try:
            pos = {a: Point2(float(x), float(y)) for a, (x, y) in zip(agent_ids, d["positions"])}
            if len(pos) != len(agent_ids):
                raise TraceFormatError(f"tick {d.get('tick')}: expected {len(agent_ids)} positions")
            return cls(int(d["tick"]), float(d["t"]), int(d["k"]), pos,
                       [list(map(int, s)) for s in d["partition"]], list(d.get("events", [])))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, TraceFormatError):
                raise
            raise TraceFormatError(f"malformed tick record: {exc}") from exc


@dataclass
class SimTrace:
    """Header (parameters and scenario snapshot) plus one record per dt tick.

    Commit events raised at the start of outer iteration ``k`` are attached to
    the tick that ends iteration ``k - 1``.
    """

    header: dict
    ticks: list[TickRecord] = field(default_factory=list)

    @property
    def agent_ids(self) -> list[int]:
        return [int(a["id"]) for a in self.header["scenario"]["agents"]]

    @property
    def dt(self) -> float:
        return float(self.header["params"]["dt_s"])

    @property
    def delta_min(self) -> float:
        return float(self.header["params"]["delta_min_m"])

    def goals(self) -> dict[int, Point2]:
        return {int(a["id"]): Point2(*a["goal_m"]) for a in self.header["scenario"]["agents"]}

    def physical_obstacles(self) -> list[AARect]:
        return [AARect(*o) for o in self.header["scenario"]["workspace"]["obstacles_m"]]

    def events(self, kind: str | None = None):
        for rec in self.ticks:
            for ev in rec.events:
                if kind is None or ev["kind"] == kind:
                    yield rec, ev


@dataclass
class MetricsSummary:
    time_to_goal: dict[int, float | None]
    path_length: dict[int, float]
    min_interagent_distance: float
    brake_event_count: int
    finished: dict[int, bool]
    min_cross_subgraph_distance: float = math.inf
    obstacle_penetrations: int = 0

    @property
    def all_finished(self) -> bool:
        return all(self.finished.values())

    def mean_time_to_goal(self) -> float:
        vals = [v for v in self.time_to_goal.values() if v is not None]
        return sum(vals) / len(vals) if vals else math.nan

    def mean_path_length(self) -> float:
        vals = [self.path_length[a] for a, ok in self.finished.items() if ok]
        return sum(vals) / len(vals) if vals else math.nan


def compute_metrics(trace: SimTrace) -> MetricsSummary:
    if not trace.ticks:
        raise TraceFormatError("trace has no tick records")
    ids = trace.agent_ids
    obstacles = trace.physical_obstacles()
    ttg: dict[int, float | None] = {a: None for a in ids}
    length = {a: 0.0 for a in ids}
    min_d = math.inf
    min_cross = math.inf
    brakes = 0
    penetrations = 0
    prev = None
    for rec in trace.ticks:
        if set(rec.positions) != set(ids):
            raise TraceFormatError(f"tick {rec.tick} does not list every agent")
        for ev in rec.events:
            if ev["kind"] == EVENT_GOAL and ttg[ev["agent"]] is None:
                ttg[ev["agent"]] = rec.t
            elif ev["kind"] == EVENT_BRAKE:
                brakes += 1
        if prev is not None:
            for a in ids:
                length[a] += euclid_dist(prev.positions[a], rec.positions[a])
        group = {a: gi for gi, s in enumerate(rec.partition) for a in s}
        for a, b in combinations(ids, 2):
            d = inf_norm_dist(rec.positions[a], rec.positions[b])
            min_d = min(min_d, d)
            if group.get(a) != group.get(b):
                min_cross = min(min_cross, d)
        for a in ids:
            if any(ob.contains_closed(rec.positions[a]) for ob in obstacles):
                penetrations += 1
        prev = rec
    finished = {a: ttg[a] is not None for a in ids}
    return MetricsSummary(ttg, length, min_d, brakes, finished, min_cross, penetrations)


def certify_trace(trace: SimTrace) -> list[str]:
    """Replay every safety invariant from the stored trace alone.

    Returns human-readable violations (empty when the trace is clean).
    """
    out: list[str] = []
    ids = trace.agent_ids
    dmin = trace.delta_min
    dt = trace.dt
    obstacles = trace.physical_obstacles()
    prev = None
    for rec in trace.ticks:
        if prev is not None:
            if rec.tick != prev.tick + 1 or not rec.t > prev.t or abs(rec.t - prev.t - dt) > 1e-9:
                out.append(f"tick {rec.tick}: time does not advance by dt")
            if rec.partition != prev.partition:
                old = {tuple(s) for s in prev.partition}
                fresh = {a for s in rec.partition if tuple(s) not in old for a in s}
                braked = {ev["agent"] for ev in rec.events if ev["kind"] == EVENT_BRAKE}
                if fresh != braked:
                    out.append(f"tick {rec.tick}: partition changed but braked {sorted(braked)} "
                               f"!= members of new subgraphs {sorted(fresh)}")
        covered = sorted(a for s in rec.partition for a in s)
        if covered != sorted(ids):
            out.append(f"tick {rec.tick}: partition {rec.partition} does not cover agents exactly")
        group = {a: gi for gi, s in enumerate(rec.partition) for a in s}
        for a, b in combinations(ids, 2):
            d = inf_norm_dist(rec.positions[a], rec.positions[b])
            if d < dmin:
                out.append(f"tick {rec.tick}: agents {a},{b} separated by {d!r} < {dmin}")
            if group.get(a) != group.get(b) and not d > dmin:
                out.append(f"tick {rec.tick}: agents {a},{b} in different subgraphs only {d!r} apart")
        for a in ids:
            for i, ob in enumerate(obstacles):
                if ob.contains_closed(rec.positions[a]):
                    out.append(f"tick {rec.tick}: agent {a} inside physical obstacle {i}")
        prev = rec
    return out


def trace_lines(trace: SimTrace):
    """The trace as JSON lines: the header, then one record per tick.  Floats
    use the shortest round-trip form, so equal traces serialize to equal
    bytes."""
    ids = trace.agent_ids
    yield json.dumps(trace.header, separators=(",", ":"), allow_nan=False)
    for rec in trace.ticks:
        yield json.dumps(rec.to_dict(ids), separators=(",", ":"), allow_nan=False)


def write_trace(trace: SimTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in trace_lines(trace):
            fh.write(line + "\n")


def parse_trace(lines) -> SimTrace:
    header = None
    ticks: list[TickRecord] = []
    ids: list[int] = []
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"line {n}: {exc}") from exc
        if header is None:
            if doc.get("type") != "header" or doc.get("schema") != TRACE_SCHEMA:
                raise TraceFormatError(f"line {n}: expected a {TRACE_SCHEMA} header")
            header = doc
            try:
                ids = [int(a["id"]) for a in header["scenario"]["agents"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise TraceFormatError("header: missing agent list") from exc
            continue
        if doc.get("type") != "tick":
            raise TraceFormatError(f"line {n}: unknown record type {doc.get('type')!r}")
        ticks.append(TickRecord.from_dict(doc, ids))
    if header is None:
        raise TraceFormatError("empty trace")
    return SimTrace(header, ticks)


def read_trace(path) -> SimTrace:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh)
