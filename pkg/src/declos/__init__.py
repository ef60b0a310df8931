"""LOS-aware decentralized multi-agent motion planning.

Agents plan with a space-time RRT* and coordinate through token passing
inside line-of-sight communication subgraphs; obstacles are inflated so that
agents that cannot see each other also cannot collide.
"""
from .geometry import AARect, InflationSpec, Point2, Workspace
from .scenario import ConfigError, ScenarioConfig, SimParams, load_scenario
from .sim import MetricsSummary, SimTrace, compute_metrics, read_trace, write_trace
from .executive import run

__all__ = [
    "AARect", "InflationSpec", "Point2", "Workspace", "ConfigError", "ScenarioConfig", "SimParams",
    "load_scenario", "MetricsSummary", "SimTrace", "compute_metrics", "read_trace", "write_trace", "run",
]
__version__ = "0.1.0"
