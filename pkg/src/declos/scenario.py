"""Scenario files: workspace, agents and run parameters.

Scenarios are JSON documents whose field names carry their units
(``_m``, ``_s``, ``_mps``).  Numbers are parsed as decimals so the
parameter checks below are exact; geometry then runs on the nearest doubles.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from decimal import Decimal
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .geometry import AARect, InflationSpec, Point2, Workspace, inf_norm_dist, point_in_free_space
from .planner import PlannerParams

SCENARIO_SCHEMA = 1
MODES = ("declos", "clairvoyant")
TOKEN_MODES = ("round_robin", "bid_based")


class ConfigError(ValueError):
    """Scenario rejected; the message names the offending field."""


@dataclass(frozen=True)
class AgentSpec:
    id: int
    start: Point2
    goal: Point2


@dataclass(frozen=True)
class SimParams:
    delta_min: float = 0.8
    delta: float = 0.501
    epsilon: float = 1.0
    epsilon_c: float = 0.001
    dt: float = 0.1
    T_outer: float = 1.0
    M: int = 200
    v_max: float = 1.0
    mode: str = "declos"
    inflation: str = "full"
    cap_length: float | None = None
    token_mode: str = "round_robin"
    master_seed: int = 0
    max_rrt_iterations: int = 150
    steer_step: float = 1.0
    goal_bias: float = 0.1
    rewire_radius: float = 2.0

    def inflation_spec(self) -> InflationSpec:
        return InflationSpec(self.delta, self.inflation, self.cap_length)

    def planner_params(self) -> PlannerParams:
        return PlannerParams(
            max_rrt_iterations=self.max_rrt_iterations, steer_step=self.steer_step,
            goal_bias=self.goal_bias, rewire_radius=self.rewire_radius, v_max=self.v_max,
            T_outer=self.T_outer, dt=self.dt, goal_tolerance=self.epsilon, delta_min=self.delta_min)

    @property
    def ticks_per_iteration(self) -> int:
        return int(round(self.T_outer / self.dt))


# field name in the file -> SimParams attribute
_PARAM_FIELDS = {
    "delta_min_m": "delta_min", "delta_m": "delta", "epsilon_m": "epsilon",
    "epsilon_c_m": "epsilon_c", "dt_s": "dt", "T_outer_s": "T_outer", "M": "M",
    "v_max_mps": "v_max", "mode": "mode", "inflation": "inflation",
    "cap_length_m": "cap_length", "token_mode": "token_mode", "master_seed": "master_seed",
    "max_rrt_iterations": "max_rrt_iterations", "steer_step_m": "steer_step",
    "goal_bias": "goal_bias", "rewire_radius_m": "rewire_radius",
}
_INT_FIELDS = {"M", "master_seed", "max_rrt_iterations"}
_STR_FIELDS = {"mode", "inflation", "token_mode"}


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    bounds: AARect
    obstacles: tuple[AARect, ...]
    agents: tuple[AgentSpec, ...]
    params: SimParams = field(default_factory=SimParams)
    description: str = ""

    def workspace(self) -> Workspace:
        return Workspace.build(self.bounds, self.obstacles, self.params.inflation_spec())

    def with_params(self, **changes) -> "ScenarioConfig":
        cfg = replace(self, params=replace(self.params, **changes))
        validate(cfg)
        return cfg

    def with_agents(self, agents) -> "ScenarioConfig":
        cfg = replace(self, agents=tuple(agents))
        validate(cfg)
        return cfg

    def to_dict(self) -> dict[str, Any]:
        p = asdict(self.params)
        return {
            "schema": SCENARIO_SCHEMA,
            "name": self.name,
            "description": self.description,
            "workspace": {
                "bounds_m": list(self.bounds.as_tuple()),
                "obstacles_m": [list(o.as_tuple()) for o in self.obstacles],
            },
            "agents": [{"id": a.id, "start_m": list(a.start), "goal_m": list(a.goal)} for a in self.agents],
            "params": {key: p[attr] for key, attr in _PARAM_FIELDS.items()},
        }


def _num(value, path: str) -> Decimal:
    if isinstance(value, bool) or not isinstance(value, (int, Decimal)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    d = Decimal(value)
    if not d.is_finite():
        raise ConfigError(f"{path}: must be finite")
    return d


def _rect(values, path: str) -> AARect:
    if not isinstance(values, list) or len(values) != 4:
        raise ConfigError(f"{path}: expected [xmin, xmax, ymin, ymax]")
    xs = [float(_num(v, f"{path}[{i}]")) for i, v in enumerate(values)]
    try:
        return AARect(*xs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _point(values, path: str) -> Point2:
    if not isinstance(values, list) or len(values) != 2:
        raise ConfigError(f"{path}: expected [x, y]")
    return Point2(*(float(_num(v, f"{path}[{i}]")) for i, v in enumerate(values)))


def parse_scenario(doc: dict) -> ScenarioConfig:
    """Build and validate a scenario from a decoded document (numbers as
    :class:`~decimal.Decimal` or int)."""
    if not isinstance(doc, dict):
        raise ConfigError("scenario: expected an object")
    if doc.get("schema", SCENARIO_SCHEMA) != SCENARIO_SCHEMA:
        raise ConfigError(f"schema: unsupported version {doc.get('schema')!r}")
    ws = doc.get("workspace")
    if not isinstance(ws, dict):
        raise ConfigError("workspace: missing")
    bounds = _rect(ws.get("bounds_m"), "workspace.bounds_m")
    obstacles = tuple(_rect(o, f"workspace.obstacles_m[{i}]") for i, o in enumerate(ws.get("obstacles_m", [])))
    raw_agents = doc.get("agents")
    if not isinstance(raw_agents, list) or not raw_agents:
        raise ConfigError("agents: need a non-empty list")
    agents = []
    for i, a in enumerate(raw_agents):
        path = f"agents[{i}]"
        if not isinstance(a, dict) or "id" not in a:
            raise ConfigError(f"{path}: expected an object with an id")
        if isinstance(a["id"], bool) or not isinstance(a["id"], int):
            raise ConfigError(f"{path}.id: expected an integer")
        agents.append(AgentSpec(a["id"], _point(a.get("start_m"), f"{path}.start_m"),
                                _point(a.get("goal_m"), f"{path}.goal_m")))
    raw = doc.get("params", {})
    kwargs: dict[str, Any] = {}
    for key, value in raw.items():
        if key not in _PARAM_FIELDS:
            raise ConfigError(f"params.{key}: unknown field")
        attr = _PARAM_FIELDS[key]
        if attr in _STR_FIELDS:
            if not isinstance(value, str):
                raise ConfigError(f"params.{key}: expected a string")
            kwargs[attr] = value
        elif value is None and attr == "cap_length":
            kwargs[attr] = None
        elif attr in _INT_FIELDS:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"params.{key}: expected an integer")
            kwargs[attr] = value
        else:
            kwargs[attr] = float(_num(value, f"params.{key}"))
    _check_param_decimals(raw)
    cfg = ScenarioConfig(str(doc.get("name", "unnamed")), bounds, obstacles, tuple(agents),
                         SimParams(**kwargs), str(doc.get("description", "")))
    validate(cfg)
    return cfg


def _check_param_decimals(raw: dict):
    # the delta condition is checked on the decimal values as written
    dec = {k: Decimal(v) for k, v in raw.items()
           if isinstance(v, (int, Decimal)) and not isinstance(v, bool)}
    defaults = SimParams()
    get = lambda key, attr: dec.get(key, Decimal(repr(getattr(defaults, attr))))
    delta, dmin = get("delta_m", "delta"), get("delta_min_m", "delta_min")
    v, dt = get("v_max_mps", "v_max"), get("dt_s", "dt")
    if delta < dmin / 2 + v * dt:
        raise ConfigError(f"params.delta_m: {delta} violates delta >= delta_min/2 + v_max*dt = {dmin / 2 + v * dt}")


def validate(cfg: ScenarioConfig) -> None:
    p = cfg.params
    if p.mode not in MODES:
        raise ConfigError(f"params.mode: expected one of {MODES}, got {p.mode!r}")
    if p.token_mode not in TOKEN_MODES:
        raise ConfigError(f"params.token_mode: expected one of {TOKEN_MODES}, got {p.token_mode!r}")
    if not p.delta_min > 0:
        raise ConfigError("params.delta_min_m: must be positive")
    if not p.epsilon_c > 0:
        raise ConfigError("params.epsilon_c_m: must be positive")
    if p.M < 0:
        raise ConfigError("params.M: must be non-negative")
    try:
        p.planner_params()
        spec = p.inflation_spec()
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from exc
    # exact up to the decimal inputs; a 1e-12 slack absorbs binary rounding of e.g. 0.4 + 0.1
    if p.delta < p.delta_min / 2 + p.v_max * p.dt - 1e-12:
        raise ConfigError(f"params.delta_m: {p.delta} violates delta >= delta_min/2 + v_max*dt "
                          f"= {p.delta_min / 2 + p.v_max * p.dt}")
    ids = [a.id for a in cfg.agents]
    if len(set(ids)) != len(ids):
        raise ConfigError("agents: ids must be unique")
    try:
        world = Workspace.build(cfg.bounds, cfg.obstacles, spec)
    except ValueError as exc:
        raise ConfigError(f"workspace: {exc}") from exc
    for i, a in enumerate(cfg.agents):
        for what, pt in (("start", a.start), ("goal", a.goal)):
            if not world.bounds.contains_closed(pt):
                raise ConfigError(f"agents[{i}].{what}_m: agent {a.id} {what} {tuple(pt)} outside the workspace")
            if not point_in_free_space(pt, world):
                j = next(j for j, ob in enumerate(world.planning_obstacles) if ob.contains_closed(pt))
                raise ConfigError(f"agents[{i}].{what}_m: safe initialization violated, agent {a.id} "
                                  f"{what} {tuple(pt)} inside delta-obstacle {j}")
    for i, a in enumerate(cfg.agents):
        for b in cfg.agents[i + 1:]:
            d = inf_norm_dist(a.start, b.start)
            if d < p.delta_min:
                raise ConfigError(f"agents: safe initialization violated, agents {a.id} and {b.id} "
                                  f"start {d:.6g} m apart (< delta_min {p.delta_min})")


def loads(text: str) -> ScenarioConfig:
    try:
        doc = json.loads(text, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from exc
    return parse_scenario(doc)


def dumps(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2) + "\n"


def load_scenario(path) -> ScenarioConfig:
    """Load a scenario file, or a shipped scenario by name (``paper_11agents``,
    ``corridor``)."""
    p = Path(path)
    if not p.exists() and p.suffix == "" and p.name in builtin_scenarios():
        text = resources.files("declos.scenarios").joinpath(f"{p.name}.json").read_text()
    else:
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    return loads(text)


def save_scenario(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(dumps(cfg))


def builtin_scenarios() -> list[str]:
    return sorted(f.name[:-5] for f in resources.files("declos.scenarios").iterdir()
                  if f.name.endswith(".json"))


def random_agents(cfg: ScenarioConfig, n: int, seed: int, min_travel: float = 3.0,
                  max_tries: int = 100_000) -> tuple[AgentSpec, ...]:
    """Random start/goal pairs in the free space of ``cfg``'s inflated
    workspace; starts (and goals) pairwise at least ``delta_min`` apart."""
    world = cfg.workspace()
    rng = np.random.default_rng([seed, n, 7919])
    b = world.bounds
    sep = cfg.params.delta_min
    starts: list[Point2] = []
    goals: list[Point2] = []

    def draw(taken: list[Point2]) -> Point2:
        for _ in range(max_tries):
            p = Point2(round(float(rng.uniform(b.xmin, b.xmax)), 1), round(float(rng.uniform(b.ymin, b.ymax)), 1))
            if point_in_free_space(p, world) and all(inf_norm_dist(p, q) >= sep for q in taken):
                return p
        raise ConfigError(f"could not place {n} agents in {cfg.name}")

    while len(starts) < n:
        s = draw(starts)
        g = draw(goals)
        if np.hypot(s.x - g.x, s.y - g.y) < min_travel:
            continue
        starts.append(s)
        goals.append(g)
    return tuple(AgentSpec(i + 1, s, g) for i, (s, g) in enumerate(zip(starts, goals)))
