"""Shared test helpers: random planning worlds and a dense numeric minimiser."""
import numpy as np

from declos.geometry import AARect, InflationSpec, Point2, Workspace, point_in_free_space
from declos.planner import PlannerParams

BOUNDS = AARect(0.0, 20.0, 0.0, 20.0)


def random_world(rng: np.random.Generator, max_obstacles: int = 6) -> Workspace:
    obs = []
    for _ in range(int(rng.integers(0, max_obstacles + 1))):
        x, y = rng.uniform(1, 17, 2)
        obs.append(AARect(float(x), float(x + rng.uniform(0.5, 3)), float(y), float(y + rng.uniform(0.5, 3))))
    mode = "adaptive" if rng.random() < 0.3 else "full"
    spec = InflationSpec(float(rng.uniform(0.3, 0.7)), mode, 1.0 if mode == "adaptive" else None)
    return Workspace.build(BOUNDS, obs, spec)


def random_points(rng, world: Workspace, n: int, sep: float, taken=()) -> list[Point2]:
    out: list[Point2] = []
    others = list(taken)
    while len(out) < n:
        p = Point2(*map(float, rng.uniform(0, 20, 2)))
        if point_in_free_space(p, world) and all(max(abs(p.x - q.x), abs(p.y - q.y)) >= sep for q in others):
            out.append(p)
            others.append(p)
    return out


def random_params(rng) -> PlannerParams:
    return PlannerParams(delta_min=float(rng.uniform(0.4, 0.9)), goal_bias=float(rng.uniform(0.05, 0.3)),
                         steer_step=float(rng.uniform(0.5, 2.0)), rewire_radius=float(rng.uniform(1.0, 3.0)))


def dense_min(f, lo, hi, n=20001):
    """Grid search then ternary refinement; f is unimodal on [lo, hi]."""
    xs = np.linspace(lo, hi, n)
    vals = [f(x) for x in xs]
    i = int(np.argmin(vals))
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, n - 1)]
    for _ in range(200):
        m1, m2 = a + (b - a) / 3, b - (b - a) / 3
        if f(m1) <= f(m2):
            b = m2
        else:
            a = m1
    return min(f(0.5 * (a + b)), vals[0], vals[-1])


def numeric_bounds(s, d):
    """Case 1 and case 2 worst-case distances by brute minimisation."""
    c1 = dense_min(lambda y: max(d + d * d / (s + y), d + s + y), 0.0, d)
    c2 = dense_min(lambda u: max(d + d * d / u, d + u), s / 2 * 1e-9, s / 2)
    return c1, c2
