"""Brute-force certifiers that share no code paths with the runtime predicates.

* :func:`lemma1_scan` grid-enumerates point pairs around one obstacle and
  reports the closest pair that cannot see each other.
* :func:`analytic_bounds` evaluates the closed-form worst cases for the
  three relative placements (opposite sides, side/far corner, side/near
  corner).
* :func:`validate_adaptive` scans a whole obstacle layout for non-LOS pairs
  that come closer than the required separation.
* :func:`brute_force_subgraphs` is the O(N^2) reference for the LOS partition.

The blocked-segment test used here is a separating-axis test, written
independently of the slab clipping in :mod:`declos.geometry`.

Search pruning: if the segment p-q passes through a point o of an obstacle,
the inf-norm distances add along the segment, ``|p-q| = |p-o| + |o-q|``, so
``dist(p, ob) + dist(q, ob) <= |p-q|``.  A scan for pairs closer than ``R``
therefore only needs points within ``R`` of the obstacle, and each point only
partners with points whose obstacle distance is below ``R`` minus its own.
Distances beyond ``3*delta + s`` from the delta-obstacle already exceed the
opposite-side bound ``2*delta + s``, which caps the scanned annulus.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .geometry import AARect, Point2, rect_array
from .visibility import SubgraphPartition, canonical_partition

_CHUNK = 512


class PreconditionError(ValueError):
    pass


def blocked_matrix(P: np.ndarray, Q: np.ndarray, rect: AARect) -> np.ndarray:
    """``out[i, j]`` is True iff segment ``P[i]``-``Q[j]`` meets the open interior
    of ``rect``.

    Separating axes: x, y and the segment normal.  The segment misses the open
    rectangle iff its projection onto one of them does not overlap the open
    projection of the rectangle.
    """
    px = P[:, 0][:, None]
    py = P[:, 1][:, None]
    qx = Q[:, 0][None, :]
    qy = Q[:, 1][None, :]
    x0, x1, y0, y1 = rect.xmin, rect.xmax, rect.ymin, rect.ymax
    hit = (np.maximum(px, qx) > x0) & (np.minimum(px, qx) < x1)
    hit &= (np.maximum(py, qy) > y0) & (np.minimum(py, qy) < y1)
    dx = qx - px
    dy = qy - py
    lo = np.full(hit.shape, np.inf)
    hi = np.full(hit.shape, -np.inf)
    for cx, cy in ((x0, y0), (x0, y1), (x1, y0), (x1, y1)):
        c = dx * (cy - py) - dy * (cx - px)
        lo = np.minimum(lo, c)
        hi = np.maximum(hi, c)
    return hit & (lo < 0) & (hi > 0)


def _pt(a) -> Point2:
    return Point2(float(a[0]), float(a[1]))


def _rect_dist(pts: np.ndarray, rect: AARect) -> np.ndarray:
    """Inf-norm distance from each point to the closed rectangle."""
    gx = np.maximum.reduce([rect.xmin - pts[:, 0], pts[:, 0] - rect.xmax, np.zeros(len(pts))])
    gy = np.maximum.reduce([rect.ymin - pts[:, 1], pts[:, 1] - rect.ymax, np.zeros(len(pts))])
    return np.maximum(gx, gy)


def _closest_blocked(P: np.ndarray, Q: np.ndarray, rect: AARect, radius: float,
                     dP: np.ndarray | None = None, dQ: np.ndarray | None = None):
    """Closest blocked pair (p in P, q in Q) with inf-norm distance <= radius.

    Returns ``(d, i, j)`` or ``None``.  ``dP``/``dQ`` are optional obstacle
    distances used for the additive pruning bound.
    """
    best = None
    if len(P) == 0 or len(Q) == 0:
        return None
    for a in range(0, len(P), _CHUNK):
        Pc = P[a:a + _CHUNK]
        d = np.maximum(np.abs(Pc[:, 0][:, None] - Q[:, 0][None, :]),
                       np.abs(Pc[:, 1][:, None] - Q[:, 1][None, :]))
        cand = d <= radius
        if dP is not None:
            cand &= (dP[a:a + _CHUNK][:, None] + dQ[None, :]) <= radius
        rows = np.nonzero(cand.any(axis=1))[0]
        if rows.size == 0:
            continue
        cols = np.nonzero(cand[rows].any(axis=0))[0]
        sub = blocked_matrix(Pc[rows], Q[cols], rect) & cand[np.ix_(rows, cols)]
        if not sub.any():
            continue
        dsub = np.where(sub, d[np.ix_(rows, cols)], np.inf)
        flat = int(np.argmin(dsub))
        r, c = divmod(flat, dsub.shape[1])
        val = float(dsub[r, c])
        if best is None or val < best[0]:
            best = (val, a + int(rows[r]), int(cols[c]))
    return best


@dataclass(frozen=True)
class Lemma1Report:
    obstacle: AARect
    delta: float
    resolution: float
    min_nonlos_distance: float
    witness_pair: tuple[Point2, Point2] | None
    case_bounds: dict[str, float]
    case0_min_distance: float = math.inf
    case0_witness: tuple[Point2, Point2] | None = None
    points_scanned: int = 0

    @property
    def certified_lower_bound(self) -> float:
        """Grid minimum minus the worst-case discretization slack (one cell per
        endpoint)."""
        return self.min_nonlos_distance - 2 * self.resolution

    @property
    def certified(self) -> bool:
        return self.min_nonlos_distance >= 2 * self.delta - 2 * self.resolution

    def to_dict(self) -> dict:
        def pair(w):
            return None if w is None else [list(w[0]), list(w[1])]
        return {
            "kind": "lemma1",
            "obstacle": list(self.obstacle.as_tuple()),
            "delta": self.delta,
            "resolution": self.resolution,
            "min_nonlos_distance": self.min_nonlos_distance,
            "witness_pair": pair(self.witness_pair),
            "case0_min_distance": self.case0_min_distance,
            "case0_witness": pair(self.case0_witness),
            "case_bounds": dict(self.case_bounds),
            "certified_lower_bound": self.certified_lower_bound,
            "certified": self.certified,
            "points_scanned": self.points_scanned,
        }


def _units(length: float, res: float) -> float:
    u = length / res
    return float(round(u)) if abs(u - round(u)) < 1e-9 * max(1.0, u) else u


def _axis(length: float, reach: int, delta_cells: float):
    """Grid coordinates along one axis in units of the resolution, with the
    obstacle spanning ``[0, length]``; also each coordinate's gap to the span
    (0 inside), its side (0 below, 1 inside, 2 above) and whether the gap
    reaches the clearance.

    Working in grid units keeps every coordinate an exact small integer when
    the side is a multiple of the resolution, so corner-grazing sight lines
    are classified exactly.  Points on the delta-obstacle boundary are kept:
    the worst cases live there.
    """
    i = np.arange(reach, 0, -1, dtype=float)
    inner = np.arange(0, math.floor(length) + 1, dtype=float)
    if inner[-1] < length:
        inner = np.append(inner, length)
    coord = np.concatenate([-i, inner, length + i[::-1]])
    gap = np.concatenate([i, np.zeros(len(inner)), i[::-1]])
    side = np.concatenate([np.zeros(len(i), dtype=int), np.ones(len(inner), dtype=int),
                           np.full(len(i), 2)])
    return coord, gap, side, gap >= delta_cells


def lemma1_scan(obstacle: AARect, delta: float, resolution: float) -> Lemma1Report:
    """Closest pair of grid points that are out of line of sight around
    ``obstacle`` while both stay outside the open delta-obstacle.

    The grid covers the annulus between the delta-obstacle and ``3*delta + s``
    beyond it, ``s`` being the shorter side.  The search radius grows until a
    blocked pair is found, so the result is the exact grid minimum.  Case-0
    pairs (opposite columns or rows of the nine-region layout) are scanned
    separately.
    """
    if not delta > 0:
        raise PreconditionError("delta must be positive")
    if not (resolution > 0 and resolution <= delta / 10 * (1 + 1e-12)):
        raise PreconditionError(f"resolution {resolution} is coarser than delta/10 = {delta / 10}")
    res = resolution
    s = min(obstacle.width, obstacle.height)
    dc = _units(delta, res)
    su = _units(s, res)
    outer = _units(4 * delta + s, res)  # delta clearance plus the 3*delta + s annulus
    reach = int(math.ceil(outer - 1e-9))
    box = AARect(0.0, _units(obstacle.width, res), 0.0, _units(obstacle.height, res))
    xs, gx, sx, cx = _axis(box.xmax, reach, dc)
    ys, gy, sy, cy = _axis(box.ymax, reach, dc)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    GX, GY = np.meshgrid(gx, gy, indexing="ij")
    SX, SY = np.meshgrid(sx, sy, indexing="ij")
    CX, CY = np.meshgrid(cx, cy, indexing="ij")
    keep = (CX | CY).ravel()  # outside the open delta-obstacle
    pts = np.column_stack([X.ravel(), Y.ravel()])[keep]
    dist = np.maximum(GX, GY).ravel()[keep]

    def world(u) -> Point2:
        return Point2(float(obstacle.xmin + res * u[0]), float(obstacle.ymin + res * u[1]))

    # general scan
    best = None
    radius = 2 * dc + 4
    while best is None and radius - dc <= outer + 1:
        band = dist <= radius - dc
        P = pts[band]
        best = _closest_blocked(P, P, box, radius, dist[band], dist[band])
        if best is not None:
            d = best[0] * res
            witness = (world(P[best[1]]), world(P[best[2]]))
        radius += dc
    if best is None:
        d, witness = math.inf, None

    # case 0: opposite columns / rows
    c0, w0 = math.inf, None
    for side, clear, gap in ((SX, CX, GX), (SY, CY, GY)):
        lab = np.where(clear, side, 1).ravel()[keep]
        g = gap.ravel()[keep]
        radius = 2 * dc + su + 4
        found = None
        while found is None and radius <= 2 * outer + su:
            A = pts[(lab == 0) & (g <= radius - su - dc)]
            B = pts[(lab == 2) & (g <= radius - su - dc)]
            found = _closest_blocked(A, B, box, radius)
            radius += dc
        if found is not None and found[0] * res < c0:
            c0 = found[0] * res
            w0 = (world(A[found[1]]), world(B[found[2]]))

    return Lemma1Report(obstacle, float(delta), float(res), d, witness,
                        analytic_bounds(s, delta), c0, w0, int(len(pts)))


def _minimax(f_dec, f_inc, lo: float, hi: float, cross: float | None, lo_open: bool) -> float:
    """min over [lo, hi] of max(f_dec, f_inc) with f_dec non-increasing and
    f_inc increasing: the optimum is the crossover or an endpoint."""
    cands = [hi]
    if not lo_open:
        cands.append(lo)
    if cross is not None and lo <= cross <= hi and not (lo_open and cross == lo):
        cands.append(cross)
    return min(max(f_dec(u), f_inc(u)) for u in cands)


def analytic_bounds(s: float, delta: float) -> dict[str, float]:
    """Closed-form worst-case inf-norm distances between two non-LOS points
    hugging a square obstacle of side ``s`` at clearance ``delta``.

    case0: opposite sides, ``2*delta + s``.
    case1: side point at height ``y1 in [0, delta]`` above the near corner
    versus a far-side point: ``max(delta + delta^2/(s+y1), delta + s + y1)``.
    case2: side point at ``y2 in [0, s/2)`` versus the adjacent face; with
    ``u = s/2 - y2 in (0, s/2]`` the distance is
    ``max(delta + delta^2/u, delta + u)``.
    """
    if not (s > 0 and delta > 0):
        raise ValueError("s and delta must be positive")
    d = delta
    case1 = _minimax(lambda y: d + d * d / (s + y), lambda y: d + s + y, 0.0, d, d - s, False)
    case2 = _minimax(lambda u: d + d * d / u, lambda u: d + u, 0.0, 0.5 * s, d, True)
    return {"case0": 2 * d + s, "case1": case1, "case2": case2}


@dataclass(frozen=True)
class Certified:
    pairs_checked: int
    min_distance: float
    resolution: float

    def __bool__(self):
        return True

    def to_dict(self) -> dict:
        return {"kind": "adaptive", "certified": True, "pairs_checked": self.pairs_checked,
                "min_nonlos_distance": self.min_distance, "resolution": self.resolution}


@dataclass(frozen=True)
class Counterexample:
    pair: tuple[Point2, Point2]
    distance: float
    obstacle_index: int
    resolution: float = 0.0

    def __bool__(self):
        return False

    def to_dict(self) -> dict:
        return {"kind": "adaptive", "certified": False, "pair": [list(self.pair[0]), list(self.pair[1])],
                "distance": self.distance, "obstacle_index": self.obstacle_index,
                "resolution": self.resolution}


def validate_adaptive(obstacles: Sequence[AARect], inflated: Sequence[AARect], delta_min: float,
                      resolution: float, bounds: AARect | None = None) -> Certified | Counterexample:
    """Scan grid points outside the open ``inflated`` set for pairs that some
    physical obstacle hides from each other.  Certified iff every such pair is
    at least ``delta_min + 2*resolution`` apart.

    The grid spans ``bounds`` when given (the workspace), otherwise the
    inflated set grown by that distance.  Each obstacle is handled separately
    with the additive pruning bound.
    """
    if not resolution > 0:
        raise PreconditionError("resolution must be positive")
    obstacles = list(obstacles)
    inflated = list(inflated)
    for i, ob in enumerate(obstacles):
        if not any(r.contains_rect(ob) for r in inflated):
            raise PreconditionError(f"obstacle {i} is not covered by the inflated set")
    need = delta_min + 2 * resolution
    if bounds is None:
        arr = rect_array(inflated)
        bounds = AARect(arr[:, 0].min() - need, arr[:, 1].max() + need,
                        arr[:, 2].min() - need, arr[:, 3].max() + need)
    nx = int(math.floor(bounds.width / resolution + 1e-9))
    ny = int(math.floor(bounds.height / resolution + 1e-9))
    xs = bounds.xmin + resolution * np.arange(nx + 1)
    ys = bounds.ymin + resolution * np.arange(ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    free = np.ones(len(pts), dtype=bool)
    for r in inflated:
        free &= ~((pts[:, 0] > r.xmin) & (pts[:, 0] < r.xmax) & (pts[:, 1] > r.ymin) & (pts[:, 1] < r.ymax))
    pts = pts[free]
    checked = 0
    worst = math.inf
    for k, ob in enumerate(obstacles):
        dist = _rect_dist(pts, ob)
        near = dist < need
        P = pts[near]
        checked += int(near.sum()) ** 2
        hit = _closest_blocked(P, P, ob, need, dist[near], dist[near])
        if hit is not None:
            d, i, j = hit
            if d < need:
                return Counterexample((_pt(P[i]), _pt(P[j])), d, k, resolution)
            worst = min(worst, d)
    return Certified(checked, worst, resolution)


def brute_force_subgraphs(positions: Mapping[int, Sequence[float]], obstacles: Sequence[AARect],
                          epoch: int = 0) -> SubgraphPartition:
    """Pairwise LOS followed by a naive transitive closure (repeat merging
    until nothing changes)."""
    ids = sorted(positions)
    P = np.array([positions[a] for a in ids], dtype=float).reshape(-1, 2)
    see = np.ones((len(ids), len(ids)), dtype=bool)
    for ob in obstacles:
        see &= ~blocked_matrix(P, P, ob)
    reach = [{ids[j] for j in range(len(ids)) if see[i, j]} | {ids[i]} for i in range(len(ids))]
    changed = True
    while changed:
        changed = False
        for i in range(len(ids)):
            grown = set(reach[i])
            for a in reach[i]:
                grown |= reach[ids.index(a)]
            if grown != reach[i]:
                reach[i] = grown
                changed = True
    groups = {frozenset(r) for r in reach}
    return canonical_partition([sorted(g) for g in groups], epoch)
