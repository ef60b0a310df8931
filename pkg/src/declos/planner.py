"""Single-agent RRT* in the inflated workspace with space-time separation
constraints against other agents' committed plans.

Time model: a plan holds one waypoint per outer iteration; between two
waypoints the agent moves at constant speed, sampled every ``dt``.  Tick
``t`` of iteration ``k`` is the global tick ``k * n + t`` where
``n = T_outer / dt``.  An agent whose plan has ended stays parked at its last
waypoint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Point2, Workspace, point_in_free_space, segment_in_free_space

KINEMATIC_RTOL = 1e-9


class NoPathFound(Exception):
    """RRT* exhausted its iteration budget without reaching the goal region."""


class InvalidStart(Exception):
    """The start violates free-space or separation preconditions."""


@dataclass(frozen=True)
class PlannerParams:
    max_rrt_iterations: int = 150
    steer_step: float = 1.0
    goal_bias: float = 0.1
    rewire_radius: float = 2.0
    v_max: float = 1.0
    T_outer: float = 1.0
    dt: float = 0.1
    goal_tolerance: float = 1.0
    delta_min: float = 0.8

    def __post_init__(self):
        if self.max_rrt_iterations < 1:
            raise ValueError("max_rrt_iterations must be >= 1")
        if not 0 <= self.goal_bias < 1:
            raise ValueError("goal_bias must lie in [0, 1)")
        if not (self.dt > 0 and self.T_outer > 0 and self.v_max > 0):
            raise ValueError("dt, T_outer and v_max must be positive")
        ratio = self.T_outer / self.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("dt must divide T_outer")
        if not (self.steer_step > 0 and self.rewire_radius > 0):
            raise ValueError("steer_step and rewire_radius must be positive")
        if not (self.goal_tolerance > 0 and self.delta_min >= 0):
            raise ValueError("goal_tolerance must be positive, delta_min non-negative")

    @property
    def ticks_per_iteration(self) -> int:
        return int(round(self.T_outer / self.dt))

    @property
    def max_hop(self) -> float:
        """Largest distance covered in one outer iteration."""
        return self.v_max * self.T_outer


@dataclass(frozen=True)
class WaypointPlan:
    agent: int
    start_iteration: int
    waypoints: tuple[Point2, ...]

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(Point2(float(x), float(y)) for x, y in self.waypoints))
        if not self.waypoints:
            raise ValueError("a plan needs at least one waypoint")

    @classmethod
    def stopped(cls, agent: int, position, iteration: int) -> "WaypointPlan":
        return cls(agent, iteration, (Point2(*position),))

    @property
    def end_iteration(self) -> int:
        return self.start_iteration + len(self.waypoints) - 1

    @property
    def final(self) -> Point2:
        return self.waypoints[-1]

    def positions(self, ticks, n: int) -> np.ndarray:
        """Positions at global ``ticks`` (array-like of ints) with ``n`` ticks per
        iteration; clamped to the first/last waypoint outside the plan."""
        w = np.asarray(self.waypoints, dtype=float)
        rel = np.asarray(ticks, dtype=np.int64) - self.start_iteration * n
        rel = np.clip(rel, 0, (len(w) - 1) * n)
        seg = rel // n
        frac = ((rel % n) / n)[:, None]
        nxt = np.minimum(seg + 1, len(w) - 1)
        a = w[seg]
        return a + (w[nxt] - a) * frac

    def position_at(self, tick: int, n: int) -> Point2:
        x, y = self.positions([tick], n)[0]
        return Point2(float(x), float(y))

    def remaining(self, iteration: int) -> "WaypointPlan":
        """The part of the plan from ``iteration`` on."""
        i = min(max(iteration - self.start_iteration, 0), len(self.waypoints) - 1)
        return WaypointPlan(self.agent, max(iteration, self.start_iteration), self.waypoints[i:])

    def to_dict(self) -> dict:
        return {"agent": self.agent, "start_iteration": self.start_iteration,
                "waypoints": [list(p) for p in self.waypoints]}

    @classmethod
    def from_dict(cls, d: dict) -> "WaypointPlan":
        return cls(int(d["agent"]), int(d["start_iteration"]), tuple(tuple(p) for p in d["waypoints"]))


@dataclass(frozen=True)
class Violation:
    kind: str  # Empty | OutOfBounds | ObstacleContact | Speed | Separation
    iteration: int
    detail: str


def path_cost(plan: WaypointPlan) -> float:
    w = plan.waypoints
    return sum(math.hypot(b.x - a.x, b.y - a.y) for a, b in zip(w, w[1:]))


def in_goal_region(p, goal, tolerance: float) -> bool:
    return max(abs(p[0] - goal[0]), abs(p[1] - goal[1])) <= tolerance / 2


def validate_plan(plan: WaypointPlan, world: Workspace, constraints: Sequence[WaypointPlan],
                  params: PlannerParams) -> Violation | None:
    """Re-check every plan invariant from scratch; ``None`` means valid.

    Obstacle contact is tested at every dt sample of every segment with the
    closed free-space predicate; separation is tested at every dt tick against
    every constraint, up to the moment both agents are parked.
    """
    if not plan.waypoints:
        return Violation("Empty", plan.start_iteration, "no waypoints")
    n = params.ticks_per_iteration
    limit = params.max_hop * (1 + KINEMATIC_RTOL)
    for i, p in enumerate(plan.waypoints):
        k = plan.start_iteration + i
        if not world.bounds.contains_closed(p):
            return Violation("OutOfBounds", k, f"waypoint {tuple(p)} outside bounds")
        if not point_in_free_space(p, world):
            return Violation("ObstacleContact", k, f"waypoint {tuple(p)} touches a planning obstacle")
    for i, (a, b) in enumerate(zip(plan.waypoints, plan.waypoints[1:])):
        k = plan.start_iteration + i + 1
        if math.hypot(b.x - a.x, b.y - a.y) > limit:
            return Violation("Speed", k, f"hop {tuple(a)} -> {tuple(b)} exceeds {params.max_hop} m")
    t0 = plan.start_iteration * n
    t_end = plan.end_iteration * n
    ticks = np.arange(t0, t_end + 1)
    own = plan.positions(ticks, n)
    for tick, p in zip(ticks.tolist(), own.tolist()):
        if not point_in_free_space(p, world):
            return Violation("ObstacleContact", tick // n, f"dt sample {tuple(p)} at tick {tick}")
    for other in constraints:
        if other.agent == plan.agent:
            continue
        last = max(t_end, other.end_iteration * n, t0)
        ticks = np.arange(t0, last + 1)
        d = np.max(np.abs(plan.positions(ticks, n) - other.positions(ticks, n)), axis=1)
        bad = np.nonzero(d < params.delta_min)[0]
        if bad.size:
            j = int(bad[0])
            return Violation("Separation", int(ticks[j]) // n,
                             f"agents {plan.agent}/{other.agent} {d[j]:.6g} m apart at tick {int(ticks[j])}")
    return None


class _ConstraintField:
    """Other agents' dt-sampled positions from the planning tick on."""

    def __init__(self, constraints: Sequence[WaypointPlan], k0: int, n: int):
        self.base = k0 * n
        self.n = n
        plans = list(constraints)
        if plans:
            horizon = max(max(p.end_iteration for p in plans) * n - self.base, 0)
            ticks = np.arange(self.base, self.base + horizon + 1)
            self.traj = np.stack([p.positions(ticks, n) for p in plans])  # (c, h+1, 2)
        else:
            self.traj = np.zeros((0, 1, 2))
        self.horizon = self.traj.shape[1] - 1

    def min_gap(self, pts: np.ndarray, first_rel_tick: int) -> float:
        """Smallest inf-norm gap between ``pts`` (occupied at consecutive ticks
        starting at ``first_rel_tick``) and every constraint."""
        if self.traj.shape[0] == 0:
            return math.inf
        idx = np.minimum(np.arange(first_rel_tick, first_rel_tick + len(pts)), self.horizon)
        others = self.traj[:, idx, :]
        return float(np.max(np.abs(others - pts[None, :, :]), axis=2).min())

    def parked_gap(self, p: np.ndarray, from_rel_tick: int) -> float:
        if self.traj.shape[0] == 0:
            return math.inf
        start = min(from_rel_tick, self.horizon)
        others = self.traj[:, start:, :]
        return float(np.max(np.abs(others - p[None, None, :]), axis=2).min())


def _hop_points(a: np.ndarray, b: np.ndarray, hop: float) -> list[np.ndarray]:
    """Waypoints (one per iteration) covering the straight move a -> b."""
    length = float(np.hypot(*(b - a)))
    m = max(1, math.ceil(length / hop - 1e-12))
    pts = [a + (b - a) * (i / m) for i in range(1, m)]
    pts.append(b)
    return pts


def _tick_samples(waypoints: list[np.ndarray], n: int) -> np.ndarray:
    """dt samples strictly after the first waypoint, computed exactly as
    :meth:`WaypointPlan.positions` would."""
    w = np.asarray(waypoints)
    frac = (np.arange(1, n + 1) % n / n)[:, None]
    out = []
    for a, b in zip(w, w[1:]):
        s = a + (b - a) * frac
        s[-1] = b
        out.append(s)
    return np.concatenate(out)


def _steer(a: np.ndarray, b: np.ndarray, step: float) -> np.ndarray:
    d = b - a
    dist = float(np.hypot(*d))
    if dist <= step:
        return b.copy()
    return a + d * (step / dist)


def rrt_plan(agent: int, start, goal, world: Workspace, constraints: Sequence[WaypointPlan],
             k0: int, params: PlannerParams, rng: np.random.Generator) -> WaypointPlan:
    """Plan from ``start`` (occupied at iteration ``k0``) into the goal region.

    Raises :class:`InvalidStart` if the start is occupied or already too close
    to a constraint, :class:`NoPathFound` if no valid plan is found within the
    iteration budget.
    """
    n = params.ticks_per_iteration
    hop = params.max_hop
    dmin = params.delta_min
    cons = [c for c in constraints if c.agent != agent]
    field = _ConstraintField(cons, k0, n)
    s = np.array([float(start[0]), float(start[1])])
    g = np.array([float(goal[0]), float(goal[1])])

    if not point_in_free_space(s, world):
        raise InvalidStart(f"agent {agent} start {tuple(s)} is not in free space")
    if field.min_gap(s[None, :], 0) < dmin:
        raise InvalidStart(f"agent {agent} start {tuple(s)} violates separation at iteration {k0}")

    def finish(path_pts: list[np.ndarray]) -> WaypointPlan:
        return WaypointPlan(agent, k0, tuple(Point2(float(p[0]), float(p[1])) for p in path_pts))

    if in_goal_region(s, g, params.goal_tolerance) and field.parked_gap(s, 0) >= dmin:
        return finish([s])

    b = world.bounds
    # tree storage
    pos = [s]
    parent = [-1]
    cost = [0.0]
    depth = [0]
    hops: list[list[np.ndarray]] = [[s]]  # waypoints of the edge into the node, incl. parent point
    children: list[list[int]] = [[]]
    goal_nodes: list[int] = []

    def edge(ia: int, p: np.ndarray, d_a: int) -> list[np.ndarray] | None:
        a = pos[ia]
        if not segment_in_free_space(a, p, world):
            return None
        pts = [a] + _hop_points(a, p, hop)
        if field.traj.shape[0]:
            samples = _tick_samples(pts, n)
            if field.min_gap(samples, d_a * n + 1) < dmin:
                return None
        return pts

    def subtree_ok(root: int, new_depth: int) -> bool:
        shift = new_depth - depth[root]
        stack = list(children[root])
        while stack:
            c = stack.pop()
            pts = hops[c]
            if field.traj.shape[0]:
                d_parent = depth[parent[c]] + shift
                if field.min_gap(_tick_samples(pts, n), d_parent * n + 1) < dmin:
                    return False
            stack.extend(children[c])
        return True

    def propagate(root: int, d_cost: float, d_depth: int):
        stack = list(children[root])
        while stack:
            c = stack.pop()
            cost[c] += d_cost
            depth[c] += d_depth
            stack.extend(children[c])

    for _ in range(params.max_rrt_iterations):
        if rng.random() < params.goal_bias:
            target = g
        else:
            target = np.array([rng.uniform(b.xmin, b.xmax), rng.uniform(b.ymin, b.ymax)])
        P = np.asarray(pos)
        d_all = np.hypot(P[:, 0] - target[0], P[:, 1] - target[1])
        i_near = int(np.argmin(d_all))
        new = _steer(pos[i_near], target, params.steer_step)
        if np.array_equal(new, pos[i_near]) or not point_in_free_space(new, world):
            continue
        d_new = np.hypot(P[:, 0] - new[0], P[:, 1] - new[1])
        near = [int(i) for i in np.nonzero(d_new <= params.rewire_radius)[0]]
        if i_near not in near:
            near.append(i_near)
        best = None
        for i in sorted(near, key=lambda i: (cost[i] + d_new[i], i)):
            pts = edge(i, new, depth[i])
            if pts is not None:
                best = (i, pts)
                break
        if best is None:
            continue
        ip, pts = best
        idx = len(pos)
        pos.append(new)
        parent.append(ip)
        cost.append(cost[ip] + float(d_new[ip]))
        depth.append(depth[ip] + len(pts) - 1)
        hops.append(pts)
        children.append([])
        children[ip].append(idx)
        if in_goal_region(new, g, params.goal_tolerance):
            goal_nodes.append(idx)
        else:
            # straight shot to the goal when it beats the best goal cost so far
            c_goal = cost[idx] + float(np.hypot(*(g - new)))
            if not goal_nodes or c_goal < min(cost[i] for i in goal_nodes):
                pts_g = edge(idx, g, depth[idx])
                if pts_g is not None and field.parked_gap(g, (depth[idx] + len(pts_g) - 1) * n) >= dmin:
                    gi = len(pos)
                    pos.append(g.copy())
                    parent.append(idx)
                    cost.append(c_goal)
                    depth.append(depth[idx] + len(pts_g) - 1)
                    hops.append(pts_g)
                    children.append([])
                    children[idx].append(gi)
                    goal_nodes.append(gi)

        # rewire neighbours through the new node
        for i in near:
            if i == ip or i == 0:
                continue
            c_via = cost[idx] + float(d_new[i])
            if c_via >= cost[i]:
                continue
            if _is_ancestor(i, idx, parent):
                continue
            pts_r = edge(idx, pos[i], depth[idx])
            if pts_r is None:
                continue
            new_depth = depth[idx] + len(pts_r) - 1
            if new_depth != depth[i] and not subtree_ok(i, new_depth):
                continue
            children[parent[i]].remove(i)
            parent[i] = idx
            children[idx].append(i)
            hops[i] = pts_r
            propagate(i, c_via - cost[i], new_depth - depth[i])
            cost[i] = c_via
            depth[i] = new_depth

    for i in sorted(goal_nodes, key=lambda i: (cost[i], i)):
        if field.parked_gap(pos[i], depth[i] * n) < dmin:
            continue
        chain = []
        j = i
        while j != 0:
            chain.append(hops[j][1:])
            j = parent[j]
        pts = [s]
        for seg in reversed(chain):
            pts.extend(seg)
        return finish(pts)
    raise NoPathFound(f"agent {agent}: no path to {tuple(g)} in {params.max_rrt_iterations} iterations")


def _is_ancestor(a: int, node: int, parent: list[int]) -> bool:
    while node != -1:
        if node == a:
            return True
        node = parent[node]
    return False
