import copy
import json
import math

import pytest
from hypothesis import given, strategies as st

from declos.executive import run
from declos.geometry import AARect, Point2, euclid_dist, inf_norm_dist
from declos.scenario import AgentSpec, ScenarioConfig, SimParams
from declos.sim import (EVENT_BRAKE, SimTrace, TraceFormatError, at_goal, certify_trace, compute_metrics,
                        parse_trace, read_trace, step_agent, trace_lines, write_trace)


@pytest.fixture(scope="module")
def corner_trace():
    cfg = ScenarioConfig("corner", AARect(0, 20, 0, 20), (AARect(8, 12, 8, 12),),
                         (AgentSpec(1, Point2(7.0, 11.0), Point2(11.0, 3.0)),
                          AgentSpec(2, Point2(11.0, 7.0), Point2(3.0, 11.0))), SimParams(M=60))
    return run(cfg)


def test_step_agent_examples():
    assert step_agent((0, 0), (5, 0), 1.0, 0.1) == Point2(0.1, 0.0)
    assert step_agent((4.95, 0), (5, 0), 1.0, 0.1) == Point2(5.0, 0.0)
    assert step_agent((2.5, -1.0), (2.5, -1.0), 1.0, 0.1) == Point2(2.5, -1.0)
    with pytest.raises(ValueError):
        step_agent((0, 0), (1, 0), 0.0, 0.1)


coord = st.floats(-50, 50, allow_nan=False)


@given(coord, coord, coord, coord)
def test_step_agent_never_overshoots(x, y, tx, ty):
    p = step_agent((x, y), (tx, ty), 1.0, 0.1)
    assert euclid_dist((x, y), p) <= 0.1 * (1 + 1e-9)
    assert euclid_dist(p, (tx, ty)) <= euclid_dist((x, y), (tx, ty)) + 1e-12


def test_at_goal_examples():
    assert at_goal((16.5, 10.0), (16.2, 10.4), 1.0)
    assert at_goal((3.0, 3.0), (3.0, 3.0), 1.0)
    assert at_goal((3.5, 3.0), (3.0, 3.0), 1.0)  # closed ball
    assert not at_goal((3.5001, 3.0), (3.0, 3.0), 1.0)
    with pytest.raises(ValueError):
        at_goal((0, 0), (0, 0), 0.0)


def test_metrics_on_run(corner_trace):
    m = compute_metrics(corner_trace)
    assert m.min_interagent_distance >= 0.8
    assert m.min_cross_subgraph_distance > 0.8
    assert m.obstacle_penetrations == 0
    assert m.brake_event_count == len(list(corner_trace.events(EVENT_BRAKE))) > 0
    starts = corner_trace.ticks[0].positions
    for a, ok in m.finished.items():
        assert ok
        assert m.path_length[a] >= inf_norm_dist(starts[a], corner_trace.ticks[-1].positions[a])
        assert 0 < m.time_to_goal[a] <= corner_trace.ticks[-1].t
    assert m.all_finished and m.mean_time_to_goal() > 0 and m.mean_path_length() > 0


def test_metrics_path_length_is_euclidean():
    header = {"type": "header", "schema": "declos-trace/1",
              "params": {"dt_s": 0.1, "delta_min_m": 0.8},
              "scenario": {"agents": [{"id": 1}], "workspace": {"obstacles_m": []}}}
    lines = [json.dumps(header),
             '{"type":"tick","tick":0,"t":0.0,"k":0,"positions":[[0,0]],"partition":[[1]],"events":[]}',
             '{"type":"tick","tick":1,"t":0.1,"k":1,"positions":[[0.06,0.08]],"partition":[[1]],"events":[]}']
    m = compute_metrics(parse_trace(lines))
    assert m.path_length[1] == pytest.approx(0.1)
    assert m.time_to_goal == {1: None} and m.finished == {1: False}
    assert math.isnan(m.mean_time_to_goal())


def test_jsonl_round_trip(tmp_path, corner_trace):
    path = tmp_path / "t.jsonl"
    write_trace(corner_trace, path)
    back = read_trace(path)
    assert back.header == corner_trace.header
    assert back.ticks == corner_trace.ticks
    assert list(trace_lines(back)) == path.read_text().splitlines()


def test_malformed_traces():
    with pytest.raises(TraceFormatError):
        parse_trace([])
    with pytest.raises(TraceFormatError):
        parse_trace(["{not json"])
    with pytest.raises(TraceFormatError):
        parse_trace(['{"type":"tick"}'])
    good = '{"type":"header","schema":"declos-trace/1","scenario":{"agents":[{"id":1}]}}'
    with pytest.raises(TraceFormatError):
        parse_trace([good, '{"type":"tick","tick":0}'])
    with pytest.raises(TraceFormatError):
        parse_trace([good, '{"type":"blob"}'])
    with pytest.raises(TraceFormatError):
        compute_metrics(SimTrace({"scenario": {"agents": []}}))


def test_certify_clean_trace(corner_trace):
    assert certify_trace(corner_trace) == []


def test_certify_detects_injected_violations(corner_trace):
    bad = copy.deepcopy(corner_trace)
    rec = bad.ticks[5]
    rec.positions[2] = Point2(rec.positions[1].x + 0.3, rec.positions[1].y)
    msgs = certify_trace(bad)
    assert any("separated by" in m for m in msgs)

    bad = copy.deepcopy(corner_trace)
    bad.ticks[7].positions[1] = Point2(10.0, 10.0)
    assert any("physical obstacle" in m for m in certify_trace(bad))

    bad = copy.deepcopy(corner_trace)
    i = next(i for i, r in enumerate(bad.ticks) if any(e["kind"] == EVENT_BRAKE for e in r.events))
    bad.ticks[i].events = [e for e in bad.ticks[i].events if e["kind"] != EVENT_BRAKE]
    assert any("partition changed" in m for m in certify_trace(bad))

    bad = copy.deepcopy(corner_trace)
    bad.ticks[3].t += 0.05
    assert any("dt" in m for m in certify_trace(bad))
