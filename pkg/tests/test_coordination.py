import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from declos.coordination import BID_BASED, ROUND_ROBIN, InvariantBreach, dma_init, dma_step
from declos.geometry import AARect, InflationSpec, Workspace
from declos.planner import PlannerParams, WaypointPlan, validate_plan

PARAMS = PlannerParams(delta_min=0.6)
WORLD = Workspace.build(AARect(0, 20, 0, 20), [AARect(9, 11, 9, 11)], InflationSpec(0.35))


def rngs(seed):
    return lambda a: np.random.default_rng([seed, a])


def assert_mutually_valid(state, k, world=WORLD, params=PARAMS):
    plans = [p.remaining(k) for p in state.committed_plans.values()]
    for p in plans:
        assert validate_plan(p, world, [q for q in plans if q.agent != p.agent], params) is None


def test_init_singleton():
    s = dma_init({4}, {4: (2.0, 2.0)}, 0, PARAMS, WORLD)
    assert s.members == (4,) and s.token_holder == 4
    assert s.committed_plans[4] == WaypointPlan.stopped(4, (2.0, 2.0), 0)
    assert s.bids == {4: 0.0}


def test_init_three_members():
    pos = {3: (12.0, 10.0), 1: (8.0, 10.0), 2: (10.0, 15.0)}
    s = dma_init([3, 1, 2], pos, 5, PARAMS, WORLD)
    assert s.members == (1, 2, 3) and s.token_holder == 1
    assert all(p.waypoints == ((pos[a]),) and p.start_iteration == 5 for a, p in s.committed_plans.items())
    s.check(WORLD, PARAMS)


def test_init_too_close_is_a_breach():
    with pytest.raises(InvariantBreach):
        dma_init([1, 2], {1: (2.0, 2.0), 2: (2.5, 2.0)}, 0, PARAMS, WORLD)
    with pytest.raises(InvariantBreach):
        dma_init([1], {1: (10.0, 10.0)}, 0, PARAMS, WORLD)
    with pytest.raises(ValueError):
        dma_init([], {}, 0, PARAMS)


def test_singleton_always_wins():
    s = dma_init([7], {7: (1.0, 1.0)}, 0, PARAMS, WORLD)
    for k in range(3):
        w, s = dma_step(s, WORLD, {7: (5.0, 1.0)}, PARAMS, k, rngs(k))
        assert w == 7 and s.token_holder == 7
    assert max(abs(v) for v in np.subtract(s.committed_plans[7].final, (5.0, 1.0))) <= 0.5


@pytest.mark.parametrize("mode", [ROUND_ROBIN, BID_BASED])
def test_steps_keep_plans_mutually_valid(mode):
    pos = {1: (2.0, 2.0), 2: (2.0, 5.0), 3: (5.0, 2.0)}
    goals = {1: (6.0, 6.0), 2: (6.0, 2.0), 3: (2.0, 6.0)}
    s = dma_init(pos, pos, 0, PARAMS, WORLD, mode)
    for k in range(6):
        before = dict(s.committed_plans)
        w, s = dma_step(s, WORLD, goals, PARAMS, k, rngs(k))
        changed = [a for a in s.members if s.committed_plans[a] != before[a]]
        assert changed in ([], [w])  # single writer
        assert s.token_holder == w
        assert_mutually_valid(s, k)
        s.check(WORLD, PARAMS, k)


def test_round_robin_alternates():
    pos = {1: (2.0, 2.0), 2: (2.0, 6.0)}
    s = dma_init(pos, pos, 0, PARAMS, WORLD, ROUND_ROBIN)
    winners = []
    for k in range(4):
        w, s = dma_step(s, WORLD, {1: (6.0, 2.0), 2: (6.0, 6.0)}, PARAMS, k, rngs(k))
        winners.append(w)
    assert winners == [1, 2, 1, 2]


def test_bid_ties_go_to_lowest_id():
    # everyone already parked on their goal: all candidates cost 0 and all bids are 0
    pos = {5: (2.0, 2.0), 3: (8.0, 2.0), 9: (2.0, 8.0)}
    s = dma_init(pos, pos, 0, PARAMS, WORLD, BID_BASED)
    w, s = dma_step(s, WORLD, pos, PARAMS, 0, rngs(0))
    assert w == 3
    assert set(s.bids.values()) == {0.0}


def test_bid_prefers_largest_improvement():
    pos = {1: (2.0, 2.0), 2: (2.0, 6.0)}
    goals = {1: (2.0, 2.0), 2: (7.0, 6.0)}  # agent 1 is home; agent 2 gains from any plan to its goal
    s = dma_init(pos, pos, 0, PARAMS, WORLD, BID_BASED)
    w, s = dma_step(s, WORLD, goals, PARAMS, 0, rngs(1))
    assert w == 2 and s.bids[2] == math.inf
    assert s.last_commit


def test_unreachable_goal_keeps_prior_plan():
    pos = {1: (2.0, 2.0)}
    s = dma_init(pos, pos, 0, PARAMS, WORLD)
    w, s2 = dma_step(s, WORLD, {1: (10.0, 10.0)}, PARAMS, 0, rngs(0))
    assert w == 1 and not s2.last_commit
    assert s2.committed_plans == s.committed_plans


def test_check_rejects_broken_state():
    pos = {1: (2.0, 2.0), 2: (2.0, 6.0)}
    s = dma_init(pos, pos, 0, PARAMS, WORLD)
    s.committed_plans[2] = WaypointPlan.stopped(2, (2.3, 2.0), 0)
    with pytest.raises(InvariantBreach):
        s.check(WORLD, PARAMS)


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.sampled_from([ROUND_ROBIN, BID_BASED]))
def test_mutual_validity_property(seed, mode):
    r = np.random.default_rng(seed)
    pos = {}
    while len(pos) < 3:
        p = tuple(float(v) for v in np.round(r.uniform(1, 19, 2), 1))
        if not (8.5 < p[0] < 11.5 and 8.5 < p[1] < 11.5) and all(
                max(abs(p[0] - q[0]), abs(p[1] - q[1])) >= 0.6 for q in pos.values()):
            pos[len(pos) + 1] = p
    goals = {a: (19.0 - p[0] + 1, p[1]) for a, p in pos.items()}
    s = dma_init(pos, pos, 0, PARAMS, WORLD, mode)
    for k in range(3):
        _, s = dma_step(s, WORLD, goals, PARAMS, k, rngs(seed + k))
        assert_mutually_valid(s, k)
