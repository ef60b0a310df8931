"""Decentralized LOS-aware outer loop.

Per outer iteration every communication subgraph runs one DMA-RRT round;
then agents track their committed plans at ``dt`` resolution while the LOS
partition is recomputed every tick.  Members of any subgraph that did not
exist on the previous tick brake on the spot, fall back to stopped plans and
restart DMA-RRT.  In clairvoyant mode the partition is pinned to a single
subgraph holding every agent.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping

import numpy as np

from .coordination import CoordinationState, InvariantBreach, dma_init, dma_step
from .geometry import Point2, inf_norm_dist, point_in_free_space
from .planner import WaypointPlan
from .scenario import ConfigError, ScenarioConfig, validate
from .sim import (EVENT_BRAKE, EVENT_COMMIT, EVENT_GOAL, TRACE_SCHEMA, SimTrace, TickRecord, at_goal,
                  step_agent)
from .visibility import SubgraphPartition, canonical_partition, compute_subgraphs

log = logging.getLogger(__name__)

TRACKING = "Tracking"
STOPPED = "EmergencyStopped"
AT_GOAL = "AtGoal"


@dataclass
class AgentRuntime:
    id: int
    start: Point2
    goal: Point2
    position: Point2
    status: str = TRACKING


def agent_rng(master_seed: int, agent: int, k: int) -> np.random.Generator:
    """Independent stream per (seed, agent, iteration); results do not depend on
    the order in which agents plan."""
    return np.random.default_rng([master_seed, agent, k])


def apply_subgraph_change(old: SubgraphPartition, new: SubgraphPartition,
                          runtimes: Mapping[int, AgentRuntime], states: dict[tuple, CoordinationState],
                          k: int, tick: int, params, world, token_mode: str) -> list[dict]:
    """Brake every member of each subgraph in ``new`` that is not in ``old``.

    Braked agents get stopped plans at their current positions (valid from
    iteration ``k``) and their subgraph a fresh coordination state; untouched
    subgraphs keep theirs.  ``states`` is updated in place.  Returns one brake
    event per braked agent.
    """
    if new == old:
        return []
    old_sets = set(old.subgraphs)
    events = []
    for s in new.subgraphs:
        if s in old_sets:
            continue
        for a in s:
            runtimes[a].status = STOPPED
            events.append({"kind": EVENT_BRAKE, "agent": a, "subgraph": list(s)})
        states[s] = dma_init(s, {a: runtimes[a].position for a in s}, k, params, world, token_mode)
    for s in list(states):
        if s not in set(new.subgraphs):
            del states[s]
    return events


def run(scenario: ScenarioConfig) -> SimTrace:
    """Simulate ``scenario`` and return its trace.

    Raises :class:`ConfigError` for an unsafe initial configuration and
    :class:`InvariantBreach` (carrying the partial trace) if a safety check
    fails during the run.
    """
    validate(scenario)
    p = scenario.params
    pp = p.planner_params()
    world = scenario.workspace()
    n = p.ticks_per_iteration
    ids = [a.id for a in scenario.agents]
    goals = {a.id: a.goal for a in scenario.agents}
    rt = {a.id: AgentRuntime(a.id, a.start, a.goal, a.start) for a in scenario.agents}
    physical = list(scenario.obstacles)
    clairvoyant = p.mode == "clairvoyant"

    doc = scenario.to_dict()
    header = {"type": "header", "schema": TRACE_SCHEMA, "params": doc["params"], "scenario": doc}
    trace = SimTrace(header)

    def partition_now(epoch: int) -> SubgraphPartition:
        if clairvoyant:
            return canonical_partition([ids], epoch)
        return compute_subgraphs({a: rt[a].position for a in ids}, physical, epoch)

    for a in ids:
        if not point_in_free_space(rt[a].start, world):
            raise ConfigError(f"agent {a} starts inside a delta-obstacle")
    partition = partition_now(0)
    states: dict[tuple, CoordinationState] = {}
    for s in partition.subgraphs:
        states[s] = dma_init(s, {a: rt[a].position for a in s}, 0, pp, world, p.token_mode)

    reached: set[int] = set()
    tick = 0
    k = 0
    events = _goal_events(rt, goals, p.epsilon, reached)
    rec = TickRecord(0, 0.0, 0, {a: rt[a].position for a in ids}, partition.as_lists(), events)
    trace.ticks.append(rec)
    _check_tick(rec, partition, trace, p, physical)

    def plan_of(a: int) -> WaypointPlan:
        return states[partition.subgraph_of(a)].committed_plans[a]

    while k < p.M and not all(at_goal(rt[a].position, goals[a], p.epsilon) for a in ids):
        k += 1
        for s in partition.subgraphs:
            winner, st = dma_step(states[s], world, goals, pp, k - 1,
                                  lambda a, k=k: agent_rng(p.master_seed, a, k))
            states[s] = st
            if st.last_commit:
                rt[winner].status = TRACKING
                plan = st.committed_plans[winner]
                trace.ticks[-1].events.append({"kind": EVENT_COMMIT, "agent": winner, "k": k,
                                               "plan": plan.to_dict()})
        for _ in range(n):
            tick += 1
            for a in ids:
                target = plan_of(a).position_at(tick, n)
                rt[a].position = step_agent(rt[a].position, target, p.v_max, p.dt)
            new = partition_now(tick)
            events = apply_subgraph_change(partition, new, rt, states, k, tick, pp, world, p.token_mode)
            partition = new
            events += _goal_events(rt, goals, p.epsilon, reached)
            rec = TickRecord(tick, round(tick * p.dt, 9), k, {a: rt[a].position for a in ids},
                             partition.as_lists(), events)
            trace.ticks.append(rec)
            _check_tick(rec, partition, trace, p, physical)
    return trace


def _goal_events(rt, goals, eps, reached: set[int]) -> list[dict]:
    out = []
    for a, r in rt.items():
        if at_goal(r.position, goals[a], eps):
            if r.status != STOPPED:
                r.status = AT_GOAL
            if a not in reached:
                reached.add(a)
                out.append({"kind": EVENT_GOAL, "agent": a})
    return out


def _check_tick(rec: TickRecord, partition: SubgraphPartition, trace: SimTrace, p, physical):
    group = {a: gi for gi, s in enumerate(partition.subgraphs) for a in s}
    ids = sorted(rec.positions)
    for a, b in combinations(ids, 2):
        d = inf_norm_dist(rec.positions[a], rec.positions[b])
        if d < p.delta_min:
            raise InvariantBreach(f"tick {rec.tick}: agents {a},{b} are {d!r} m apart "
                                  f"(< delta_min {p.delta_min})", trace)
        if group[a] != group[b] and not d > p.delta_min:
            raise InvariantBreach(f"tick {rec.tick}: agents {a},{b} in different subgraphs "
                                  f"only {d!r} m apart", trace)
    for a in ids:
        for i, ob in enumerate(physical):
            if ob.contains_closed(rec.positions[a]):
                raise InvariantBreach(f"tick {rec.tick}: agent {a} inside physical obstacle {i}", trace)

