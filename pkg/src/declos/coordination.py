"""Token-passing DMA-RRT coordination inside one communication subgraph.

Only the token winner may replace its committed plan, and only with a
candidate that is valid against every other member's committed plan, so the
committed plans of a subgraph stay pairwise conflict-free.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .geometry import Workspace, inf_norm_dist, point_in_free_space
from .planner import (InvalidStart, NoPathFound, PlannerParams, WaypointPlan, in_goal_region,
                      path_cost, rrt_plan, validate_plan)

log = logging.getLogger(__name__)

ROUND_ROBIN = "round_robin"
BID_BASED = "bid_based"


class InvariantBreach(RuntimeError):
    """A safety invariant that the algorithm guarantees was found violated."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class CoordinationState:
    members: tuple[int, ...]
    token_holder: int
    committed_plans: dict[int, WaypointPlan]
    bids: dict[int, float]
    mode: str = ROUND_ROBIN
    steps: int = 0
    last_commit: bool = False

    def check(self, world: Workspace, params: PlannerParams, k0: int | None = None):
        """Raise :class:`InvariantBreach` unless every state invariant holds.

        With ``k0`` the plans are compared from that iteration on; earlier
        parts of older plans are history."""
        if self.token_holder not in self.members:
            raise InvariantBreach(f"token holder {self.token_holder} is not a member of {self.members}")
        if set(self.committed_plans) != set(self.members):
            raise InvariantBreach(f"committed plans {sorted(self.committed_plans)} != members {self.members}")
        plans = [self.committed_plans[a] for a in self.members]
        if k0 is not None:
            plans = [p.remaining(k0) for p in plans]
        for p in plans:
            v = validate_plan(p, world, [q for q in plans if q.agent != p.agent], params)
            if v is not None:
                raise InvariantBreach(f"committed plan of agent {p.agent} invalid: {v}")


def dma_init(members, positions: Mapping[int, tuple], k0: int, params: PlannerParams,
             world: Workspace | None = None, mode: str = ROUND_ROBIN) -> CoordinationState:
    """Every member starts stopped at its current position; the smallest id
    holds the token."""
    members = tuple(sorted(members))
    if not members:
        raise ValueError("a subgraph needs at least one member")
    for i, a in enumerate(members):
        if world is not None and not point_in_free_space(positions[a], world):
            raise InvariantBreach(f"agent {a} at {tuple(positions[a])} is not in free space at init")
        for b in members[i + 1:]:
            d = inf_norm_dist(positions[a], positions[b])
            if d < params.delta_min:
                raise InvariantBreach(
                    f"agents {a} and {b} are {d:.6g} m apart at init (< delta_min {params.delta_min})")
    plans = {a: WaypointPlan.stopped(a, positions[a], k0) for a in members}
    return CoordinationState(members, members[0], plans, {a: 0.0 for a in members}, mode)


def _next_member(members: tuple[int, ...], holder: int) -> int:
    i = members.index(holder)
    return members[(i + 1) % len(members)]


def _cost_to_go(plan: WaypointPlan, k0: int, goal, tolerance: float) -> float:
    rest = plan.remaining(k0)
    if not in_goal_region(rest.final, goal, tolerance):
        return math.inf
    return path_cost(rest)


def dma_step(state: CoordinationState, world: Workspace, goals: Mapping[int, tuple],
             params: PlannerParams, k0: int,
             rng_for: Callable[[int], np.random.Generator]) -> tuple[int, CoordinationState]:
    """One DMA-RRT round planned from iteration ``k0``.

    Round-robin: the token holder replans on the first round after init, then
    the token moves to the next member id each round.  Bid-based: every member
    plans and the highest potential path improvement wins (ties to the lowest
    id).  Returns the winner and the updated state.
    """
    members = state.members
    candidates: dict[int, WaypointPlan | None] = {}

    def plan_for(a: int) -> WaypointPlan | None:
        others = [state.committed_plans[b] for b in members if b != a]
        start = state.committed_plans[a].position_at(k0 * params.ticks_per_iteration,
                                                     params.ticks_per_iteration)
        try:
            return rrt_plan(a, start, goals[a], world, others, k0, params, rng_for(a))
        except NoPathFound:
            return None
        except InvalidStart as exc:
            raise InvariantBreach(f"DMA step at iteration {k0}: {exc}") from exc

    if state.mode == ROUND_ROBIN:
        winner = state.token_holder if state.steps == 0 else _next_member(members, state.token_holder)
        candidates[winner] = plan_for(winner)
        bids = {a: 0.0 for a in members}
    elif state.mode == BID_BASED:
        bids = {}
        for a in members:
            cand = plan_for(a)
            candidates[a] = cand
            if cand is None:
                bids[a] = -math.inf
            else:
                current = _cost_to_go(state.committed_plans[a], k0, goals[a], params.goal_tolerance)
                bids[a] = current - path_cost(cand)
        best = max(bids.values())
        winner = min(a for a in members if bids[a] == best)
    else:
        raise ValueError(f"unknown token mode {state.mode!r}")

    plans = dict(state.committed_plans)
    cand = candidates.get(winner)
    committed = False
    if cand is not None:
        others = [plans[b] for b in members if b != winner]
        v = validate_plan(cand, world, others, params)
        if v is None:
            plans[winner] = cand
            committed = True
        else:
            log.warning("dropping candidate of agent %s at iteration %s: %s", winner, k0, v)
    return winner, CoordinationState(members, winner, plans, bids, state.mode, state.steps + 1, committed)
