"""Planar geometry: inf-norm metric, axis-aligned rectangles, obstacle inflation
and segment/rectangle predicates.

Two rectangle conventions are used throughout the package:

* line-of-sight tests treat obstacle interiors as OPEN, so a sight line that
  grazes an edge or a corner is not blocked;
* free-space membership treats planning obstacles as CLOSED, so a point on an
  inflated boundary is occupied.

Predicates compare floats exactly; no epsilon is applied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class AARect:
    """Axis-aligned rectangle ``[xmin, xmax] x [ymin, ymax]`` in meters."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        vals = (self.xmin, self.xmax, self.ymin, self.ymax)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite rectangle bounds: {vals}")
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(f"degenerate rectangle: {vals}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains_rect(self, other: "AARect") -> bool:
        return (self.xmin <= other.xmin and other.xmax <= self.xmax
                and self.ymin <= other.ymin and other.ymax <= self.ymax)

    def contains_closed(self, p) -> bool:
        return self.xmin <= p[0] <= self.xmax and self.ymin <= p[1] <= self.ymax

    def contains_open(self, p) -> bool:
        return self.xmin < p[0] < self.xmax and self.ymin < p[1] < self.ymax

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.xmin, self.xmax, self.ymin, self.ymax)


@dataclass(frozen=True)
class InflationSpec:
    """How physical obstacles become planning obstacles.

    ``delta`` is the clearance kept on every face of an obstacle (the
    delta-obstacle is the obstacle grown by ``delta`` per side, i.e. the
    Minkowski sum with an inf-norm ball of side ``2 * delta``).  In adaptive
    mode only corner neighborhoods of side ``cap_length`` are grown.
    """

    delta: float
    mode: str = "full"
    cap_length: float | None = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("inflation delta must be positive")
        if self.mode not in ("full", "adaptive"):
            raise ValueError(f"unknown inflation mode {self.mode!r}")
        if self.mode == "adaptive" and not (self.cap_length is not None and self.cap_length > 0):
            raise ValueError("adaptive inflation needs a positive cap_length")


@dataclass(frozen=True)
class Workspace:
    bounds: AARect
    physical_obstacles: tuple[AARect, ...] = ()
    planning_obstacles: tuple[AARect, ...] = ()
    _planning_array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "physical_obstacles", tuple(self.physical_obstacles))
        object.__setattr__(self, "planning_obstacles", tuple(self.planning_obstacles))
        for i, ob in enumerate(self.physical_obstacles):
            if not self.bounds.contains_rect(ob):
                raise ValueError(f"physical obstacle {i} {ob.as_tuple()} leaves the workspace bounds")
            if not any(p.contains_rect(ob) for p in self.planning_obstacles):
                # adaptive inflation covers an obstacle with a union; the
                # obstacle itself is always part of that union.
                raise ValueError(f"physical obstacle {i} is not covered by a planning obstacle")
        object.__setattr__(self, "_planning_array", rect_array(self.planning_obstacles))

    @property
    def planning_array(self) -> np.ndarray:
        return self._planning_array

    @classmethod
    def build(cls, bounds: AARect, obstacles: Sequence[AARect], inflation: InflationSpec) -> "Workspace":
        return cls(bounds, tuple(obstacles), tuple(inflate_obstacles(obstacles, inflation)))


def rect_array(rects: Iterable[AARect]) -> np.ndarray:
    """Stack rectangles into an ``(n, 4)`` array of ``xmin, xmax, ymin, ymax``."""
    arr = np.array([r.as_tuple() for r in rects], dtype=float)
    return arr.reshape(-1, 4)


def inf_norm_dist(p, q) -> float:
    return max(abs(p[0] - q[0]), abs(p[1] - q[1]))


def euclid_dist(p, q) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def expand_rect(r: AARect, delta: float) -> AARect:
    """Minkowski sum of ``r`` with the inf-norm ball of side ``delta``.

    Every bound moves outward by ``delta / 2``.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    h = delta / 2
    return AARect(r.xmin - h, r.xmax + h, r.ymin - h, r.ymax + h)


def delta_obstacle(r: AARect, delta: float) -> AARect:
    """The obstacle grown by a clearance of ``delta`` on every face."""
    return expand_rect(r, 2 * delta)


def adaptive_expand(r: AARect, delta: float, cap_length: float) -> list[AARect]:
    """Grow only the corner neighborhoods of ``r``.

    Returns ``r`` followed by four caps; each cap is the ``cap_length`` square
    in a corner of ``r`` (clipped to ``r``) expanded by the inf-norm ball of
    side ``delta``.  The middle of a face farther than ``cap_length`` from both
    of its corners keeps its physical boundary.
    """
    if not (delta > 0 and cap_length > 0):
        raise ValueError("adaptive expansion needs delta > 0 and cap_length > 0")
    lx = min(cap_length, r.width)
    ly = min(cap_length, r.height)
    # clamp so rounding never pushes a cap past r
    x_lo, x_hi = min(r.xmin + lx, r.xmax), max(r.xmax - lx, r.xmin)
    y_lo, y_hi = min(r.ymin + ly, r.ymax), max(r.ymax - ly, r.ymin)
    corners = [
        AARect(r.xmin, x_lo, r.ymin, y_lo),
        AARect(x_hi, r.xmax, r.ymin, y_lo),
        AARect(r.xmin, x_lo, y_hi, r.ymax),
        AARect(x_hi, r.xmax, y_hi, r.ymax),
    ]
    return [r] + [expand_rect(c, delta) for c in corners]


def inflate_obstacles(obstacles: Sequence[AARect], spec: InflationSpec) -> list[AARect]:
    out: list[AARect] = []
    for ob in obstacles:
        if spec.mode == "full":
            out.append(delta_obstacle(ob, spec.delta))
        else:
            out.extend(adaptive_expand(ob, 2 * spec.delta, spec.cap_length))
    return out


def _open_slab(p0: float, d: float, lo: float, hi: float) -> tuple[float, float]:
    # parameter interval where lo < p0 + t*d < hi
    if d == 0:
        return (-math.inf, math.inf) if lo < p0 < hi else (math.inf, -math.inf)
    t1 = (lo - p0) / d
    t2 = (hi - p0) / d
    return (t1, t2) if t1 < t2 else (t2, t1)


def segment_hits_open_rect(p, q, r: AARect) -> bool:
    if (q[0], q[1]) < (p[0], p[1]):
        p, q = q, p  # fixed endpoint order keeps the test exactly symmetric
    dx = q[0] - p[0]
    dy = q[1] - p[1]
    lx, hx = _open_slab(p[0], dx, r.xmin, r.xmax)
    ly, hy = _open_slab(p[1], dy, r.ymin, r.ymax)
    lo = max(lx, ly)
    hi = min(hx, hy)
    return lo < hi and lo < 1 and hi > 0


def segment_blocked(p, q, obstacles: Iterable[AARect]) -> bool:
    """True iff some point of the closed segment ``pq`` lies in the open interior
    of one of ``obstacles``."""
    return any(segment_hits_open_rect(p, q, ob) for ob in obstacles)


def segment_hits_closed_rect(p, q, r: AARect) -> bool:
    dx = q[0] - p[0]
    dy = q[1] - p[1]
    lo, hi = 0.0, 1.0
    for p0, d, a, b in ((p[0], dx, r.xmin, r.xmax), (p[1], dy, r.ymin, r.ymax)):
        if d == 0:
            if not a <= p0 <= b:
                return False
            continue
        t1 = (a - p0) / d
        t2 = (b - p0) / d
        if t1 > t2:
            t1, t2 = t2, t1
        lo = max(lo, t1)
        hi = min(hi, t2)
        if lo > hi:
            return False
    return True


def segment_hits_closed_rects(p, q, rects: np.ndarray) -> bool:
    """Vectorized closed-rectangle hit test of one segment against an ``(n, 4)``
    rectangle array (see :func:`rect_array`)."""
    if rects.shape[0] == 0:
        return False
    lo = np.zeros(rects.shape[0])
    hi = np.ones(rects.shape[0])
    ok = np.ones(rects.shape[0], dtype=bool)
    for axis, (a_col, b_col) in enumerate(((0, 1), (2, 3))):
        p0 = p[axis]
        d = q[axis] - p0
        a = rects[:, a_col]
        b = rects[:, b_col]
        if d == 0:
            ok &= (a <= p0) & (p0 <= b)
            continue
        t1 = (a - p0) / d
        t2 = (b - p0) / d
        lo = np.maximum(lo, np.minimum(t1, t2))
        hi = np.minimum(hi, np.maximum(t1, t2))
    return bool(np.any(ok & (lo <= hi)))


def point_in_free_space(p, w: Workspace) -> bool:
    if not w.bounds.contains_closed(p):
        return False
    return not any(ob.contains_closed(p) for ob in w.planning_obstacles)


def segment_in_free_space(p, q, w: Workspace) -> bool:
    """Exact test that the closed segment stays in bounds and clear of every
    closed planning obstacle."""
    if not (w.bounds.contains_closed(p) and w.bounds.contains_closed(q)):
        return False
    return not segment_hits_closed_rects(p, q, w.planning_array)
