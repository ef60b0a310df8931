"""Line-of-sight neighbors and communication subgraphs.

LOS is always evaluated against PHYSICAL obstacles; inflated planning
obstacles exist only for the planner.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .geometry import AARect, rect_array, segment_blocked


@dataclass(frozen=True)
class SubgraphPartition:
    """Canonical partition of agent ids: members sorted ascending, components
    sorted by smallest member."""

    subgraphs: tuple[tuple[int, ...], ...]
    epoch: int = 0

    def __eq__(self, other):
        # epoch is bookkeeping; partitions compare by their sets only
        if not isinstance(other, SubgraphPartition):
            return NotImplemented
        return self.subgraphs == other.subgraphs

    def __hash__(self):
        return hash(self.subgraphs)

    def members(self) -> frozenset[int]:
        return frozenset(a for s in self.subgraphs for a in s)

    def subgraph_of(self, agent: int) -> tuple[int, ...]:
        for s in self.subgraphs:
            if agent in s:
                return s
        raise KeyError(agent)

    def as_lists(self) -> list[list[int]]:
        return [list(s) for s in self.subgraphs]


def canonical_partition(groups, epoch: int = 0) -> SubgraphPartition:
    comps = sorted((tuple(sorted(g)) for g in groups if g), key=lambda s: s[0])
    return SubgraphPartition(tuple(comps), epoch)


class UnionFind:
    def __init__(self, items):
        self.parent = {i: i for i in items}

    def find(self, a):
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller id becomes the root so the result is order independent
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra

    def groups(self) -> list[list]:
        out: dict = {}
        for i in self.parent:
            out.setdefault(self.find(i), []).append(i)
        return list(out.values())


def in_los(i: int, j: int, positions: Mapping[int, Sequence[float]],
           physical_obstacles: Sequence[AARect]) -> bool:
    if i == j:
        raise ValueError("LOS is defined between two distinct agents")
    for a in (i, j):
        if a not in positions:
            raise KeyError(f"unknown agent id {a}")
    return not segment_blocked(positions[i], positions[j], physical_obstacles)


def neighbors(i: int, positions, physical_obstacles) -> set[int]:
    return {j for j in positions if j != i and in_los(i, j, positions, physical_obstacles)}


def los_matrix(points: np.ndarray, rects: np.ndarray) -> np.ndarray:
    """Boolean ``(n, n)`` LOS matrix for ``(n, 2)`` points against ``(m, 4)``
    open rectangles.  Same predicate as :func:`segment_blocked`, vectorized
    over all pairs."""
    n = points.shape[0]
    visible = np.ones((n, n), dtype=bool)
    if n < 2 or rects.shape[0] == 0:
        return visible
    iu, ju = np.triu_indices(n, k=1)
    P, Q = points[iu], points[ju]
    # same lexicographic endpoint order as the scalar predicate
    swap = (Q[:, 0] < P[:, 0]) | ((Q[:, 0] == P[:, 0]) & (Q[:, 1] < P[:, 1]))
    P, Q = np.where(swap[:, None], Q, P), np.where(swap[:, None], P, Q)
    p = P[:, None, :]                    # (pairs, 1, 2)
    d = Q[:, None, :] - p                # (pairs, 1, 2)
    lo = np.full((iu.size, rects.shape[0]), -np.inf)
    hi = np.full((iu.size, rects.shape[0]), np.inf)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for axis, (a_col, b_col) in enumerate(((0, 1), (2, 3))):
            p0 = p[..., axis]
            dd = d[..., axis]
            a = rects[None, :, a_col]
            b = rects[None, :, b_col]
            t1 = (a - p0) / dd
            t2 = (b - p0) / dd
            zero = dd == 0
            inside = (a < p0) & (p0 < b)
            lo = np.maximum(lo, np.where(zero, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2)))
            hi = np.minimum(hi, np.where(zero, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2)))
    blocked = ((lo < hi) & (lo < 1) & (hi > 0)).any(axis=1)
    visible[iu, ju] = ~blocked
    visible[ju, iu] = ~blocked
    return visible


def compute_subgraphs(positions: Mapping[int, Sequence[float]],
                      physical_obstacles: Sequence[AARect], epoch: int = 0) -> SubgraphPartition:
    """Connected components of the LOS graph, in canonical order."""
    ids = sorted(positions)
    pts = np.array([positions[i] for i in ids], dtype=float).reshape(-1, 2)
    vis = los_matrix(pts, rect_array(physical_obstacles))
    uf = UnionFind(ids)
    rows, cols = np.nonzero(np.triu(vis, k=1))
    for r, c in zip(rows.tolist(), cols.tolist()):
        uf.union(ids[r], ids[c])
    return canonical_partition(uf.groups(), epoch)
