"""Command line entry point: ``declos run | suite | certify | metrics | render``.

Exit status is 0 on success, 1 when a run raises an invariant breach or a
certification fails, and 2 for usage or configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .coordination import InvariantBreach
from .executive import run
from .geometry import AARect
from .oracle import brute_force_subgraphs, lemma1_scan, validate_adaptive
from .scenario import ConfigError, ScenarioConfig, load_scenario, random_agents
from .sim import (MetricsSummary, SimTrace, TraceFormatError, certify_trace, compute_metrics, read_trace,
                  write_trace)

log = logging.getLogger("declos")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

CELL_FIELDS = ["scenario", "n_agents", "seed", "mode", "status", "finished_agents", "all_finished",
               "mean_time_to_goal_s", "mean_path_length_m", "min_interagent_distance_m",
               "brake_events", "ticks", "trace", "message"]
SUMMARY_FIELDS = ["mode", "n_agents", "runs", "failed_runs", "all_finished_runs",
                  "time_to_goal_mean", "time_to_goal_std", "path_length_mean", "path_length_std",
                  "brake_events_mean", "brake_events_std", "min_interagent_distance"]


def parse_seeds(text: str) -> list[int]:
    """``"0-4"``, ``"1,3,5"`` or a mix such as ``"0-2,7"``."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            a, b = int(lo), int(hi)
            if b < a:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(a, b + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    return seeds


# ---------------------------------------------------------------- suites

@dataclass
class CellResult:
    seed: int
    mode: str
    n_agents: int
    status: str  # ok | breach | error
    metrics: MetricsSummary | None = None
    ticks: int = 0
    trace_path: str = ""
    message: str = ""

    def row(self, scenario: str) -> dict:
        m = self.metrics
        return {
            "scenario": scenario, "n_agents": self.n_agents, "seed": self.seed, "mode": self.mode,
            "status": self.status,
            "finished_agents": "" if m is None else sum(m.finished.values()),
            "all_finished": "" if m is None else int(m.all_finished),
            "mean_time_to_goal_s": "" if m is None else _fmt(m.mean_time_to_goal()),
            "mean_path_length_m": "" if m is None else _fmt(m.mean_path_length()),
            "min_interagent_distance_m": "" if m is None else _fmt(m.min_interagent_distance),
            "brake_events": "" if m is None else m.brake_event_count,
            "ticks": self.ticks, "trace": self.trace_path, "message": self.message,
        }


@dataclass
class SuiteResult:
    scenario: str
    cells: list[CellResult]
    summary: list[dict]


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def suite_setup(scenario: ScenarioConfig, seed: int, n_agents: int | None) -> ScenarioConfig:
    """The scenario for one seed; with ``n_agents`` the agents are drawn at
    random from the seed, so every mode sees the same setup."""
    cfg = scenario.with_params(master_seed=seed)
    if n_agents is not None:
        cfg = cfg.with_agents(random_agents(cfg, n_agents, seed))
    return cfg


def _run_cell(job) -> CellResult:
    scenario, seed, mode, n_agents, trace_path = job
    cfg = suite_setup(scenario, seed, n_agents).with_params(mode=mode)
    n = len(cfg.agents)
    try:
        trace = run(cfg)
    except InvariantBreach as exc:
        if trace_path and exc.trace is not None:
            write_trace(exc.trace, trace_path)
        return CellResult(seed, mode, n, "breach", ticks=len(exc.trace.ticks) if exc.trace else 0,
                          trace_path=trace_path or "", message=str(exc))
    except Exception as exc:  # noqa: BLE001 - the suite marks the cell and continues
        return CellResult(seed, mode, n, "error", message=f"{type(exc).__name__}: {exc}")
    if trace_path:
        write_trace(trace, trace_path)
    return CellResult(seed, mode, n, "ok", compute_metrics(trace), len(trace.ticks), trace_path or "")


def summarize(cells: Sequence[CellResult]) -> list[dict]:
    """Mean and sample standard deviation per (mode, agent count) over the
    cells that ran to completion.  Time to goal and path length are per-run
    averages over the agents that finished."""
    groups: dict[tuple[str, int], list[CellResult]] = {}
    for c in cells:
        groups.setdefault((c.mode, c.n_agents), []).append(c)
    rows = []
    for (mode, n), cs in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        ok = [c for c in cs if c.status == "ok"]

        def stats(vals):
            vals = [v for v in vals if not math.isnan(v)]
            if not vals:
                return "", ""
            sd = statistics.stdev(vals) if len(vals) > 1 else 0.0
            return _fmt(statistics.fmean(vals)), _fmt(sd)

        ttg = stats([c.metrics.mean_time_to_goal() for c in ok])
        pl = stats([c.metrics.mean_path_length() for c in ok])
        br = stats([float(c.metrics.brake_event_count) for c in ok])
        rows.append({
            "mode": mode, "n_agents": n, "runs": len(cs), "failed_runs": len(cs) - len(ok),
            "all_finished_runs": sum(c.metrics.all_finished for c in ok),
            "time_to_goal_mean": ttg[0], "time_to_goal_std": ttg[1],
            "path_length_mean": pl[0], "path_length_std": pl[1],
            "brake_events_mean": br[0], "brake_events_std": br[1],
            "min_interagent_distance": _fmt(min((c.metrics.min_interagent_distance for c in ok), default=math.nan)),
        })
    return rows


def run_suite(scenario: ScenarioConfig, seeds: Sequence[int], modes: Sequence[str],
              agent_counts: Sequence[int] | None = None, out_dir=None, jobs: int = 1,
              keep_traces: bool = True) -> SuiteResult:
    """Every (agent count, seed, mode) cell of the sweep.  The same seeds and
    setups are used for every mode.  Failed cells are recorded and the sweep
    continues.  Each cell writes its own trace file, so cells can run in
    parallel processes (``jobs``)."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "traces").mkdir(parents=True, exist_ok=True)
    counts = list(agent_counts) if agent_counts else [None]
    jobs_list = []
    for n in counts:
        for seed in seeds:
            for mode in modes:
                tp = ""
                if out is not None and keep_traces:
                    tag = f"n{n}_" if n is not None else ""
                    tp = str(out / "traces" / f"{tag}s{seed}_{mode}.jsonl")
                jobs_list.append((scenario, seed, mode, n, tp))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell, jobs_list))
    else:
        cells = [_run_cell(j) for j in jobs_list]
    result = SuiteResult(scenario.name, cells, summarize(cells))
    if out is not None:
        _write_csv(out / "cells.csv", CELL_FIELDS, [c.row(scenario.name) for c in cells])
        _write_csv(out / "summary.csv", SUMMARY_FIELDS, result.summary)
    return result


def _write_csv(path: Path, fields: list[str], rows: list[dict]):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


# ---------------------------------------------------------------- metrics / certify

def metrics_rows(m: MetricsSummary) -> list[dict]:
    return [{"agent": a, "finished": int(m.finished[a]),
             "time_to_goal_s": _fmt(m.time_to_goal[a]) if m.time_to_goal[a] is not None else "",
             "path_length_m": _fmt(m.path_length[a])} for a in sorted(m.finished)]


def write_metrics(m: MetricsSummary, path) -> None:
    _write_csv(Path(path), ["agent", "finished", "time_to_goal_s", "path_length_m"], metrics_rows(m))


def certify_trace_oracle(trace: SimTrace) -> list[str]:
    """Replay checks from :func:`declos.sim.certify_trace` plus a brute-force
    recomputation of every recorded LOS partition (skipped for clairvoyant
    traces, whose partition is pinned)."""
    out = certify_trace(trace)
    if trace.header["params"].get("mode") == "clairvoyant":
        return out
    obstacles = trace.physical_obstacles()
    for rec in trace.ticks:
        ref = brute_force_subgraphs(rec.positions, obstacles)
        if ref.as_lists() != rec.partition:
            out.append(f"tick {rec.tick}: recorded partition {rec.partition} != brute force {ref.as_lists()}")
    return out


def _summary_line(m: MetricsSummary) -> str:
    return (f"finished {sum(m.finished.values())}/{len(m.finished)}, "
            f"mean time to goal {m.mean_time_to_goal():.2f} s, mean path length {m.mean_path_length():.2f} m, "
            f"min distance {m.min_interagent_distance:.4f} m, brake events {m.brake_event_count}")


# ---------------------------------------------------------------- commands

def cmd_run(args) -> int:
    cfg = load_scenario(args.scenario)
    changes = {"master_seed": args.seed}
    for attr in ("mode", "inflation", "token_mode"):
        if getattr(args, attr) is not None:
            changes[attr] = getattr(args, attr)
    if args.cap_length is not None:
        changes["cap_length"] = args.cap_length
    cfg = cfg.with_params(**changes)
    out = Path(args.out or f"runs/{cfg.name}_{cfg.params.mode}_s{args.seed}")
    out.mkdir(parents=True, exist_ok=True)
    try:
        trace = run(cfg)
    except InvariantBreach as exc:
        if exc.trace is not None:
            write_trace(exc.trace, out / "trace.jsonl")
        print(f"INVARIANT BREACH: {exc}", file=sys.stderr)
        return EXIT_FAIL
    write_trace(trace, out / "trace.jsonl")
    m = compute_metrics(trace)
    write_metrics(m, out / "metrics.csv")
    if args.plots or args.svg:
        from . import plotting
        plotting.plot_trajectories(trace, out / "trajectories.png")
        plotting.plot_distances(trace, out / "distances.png")
        if args.svg:
            plotting.render_svg_frames(trace, out / "frames", per=args.svg_per)
    print(f"{cfg.name} seed {args.seed} {cfg.params.mode}: {_summary_line(m)}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_suite(args) -> int:
    cfg = load_scenario(args.scenario)
    if args.inflation is not None:
        cfg = cfg.with_params(inflation=args.inflation)
    out = Path(args.out or f"runs/{cfg.name}_suite")
    res = run_suite(cfg, parse_seeds(args.seeds), args.modes, args.agents, out, args.jobs,
                    keep_traces=not args.no_traces)
    if args.plots:
        from . import plotting
        plotting.plot_suite(res.summary, out)
    w = csv.DictWriter(sys.stdout, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(res.summary)
    bad = [c for c in res.cells if c.status != "ok"]
    for c in bad:
        print(f"cell n={c.n_agents} seed={c.seed} {c.mode}: {c.status}: {c.message}", file=sys.stderr)
    return EXIT_FAIL if any(c.status == "breach" for c in bad) else EXIT_OK


def cmd_certify(args) -> int:
    records: list[dict] = []
    failed = False
    for path in args.traces:
        trace = read_trace(path)
        problems = certify_trace_oracle(trace)
        rec = {"kind": "trace", "trace": str(path), "ticks": len(trace.ticks),
               "certified": not problems, "violations": problems[:100], "violation_count": len(problems)}
        failed |= bool(problems)
        records.append(rec)
        Path(str(path) + ".cert.jsonl").write_text(json.dumps(rec) + "\n")
        print(f"{path}: {'CERTIFIED' if not problems else f'FAILED ({len(problems)} violations)'}")
        for p in problems[:10]:
            print(f"  {p}")
    if args.lemma1 is not None:
        s, delta, res = args.lemma1
        rep = lemma1_scan(AARect(0.0, s, 0.0, s), delta, res)
        rec = rep.to_dict()
        records.append(rec)
        failed |= not rep.certified
        print(f"lemma1 s={s} delta={delta} res={res}: min non-LOS distance {rep.min_nonlos_distance:.6g} "
              f"(need >= {2 * delta - 2 * res:.6g}), case0 {rep.case0_min_distance:.6g}, "
              f"analytic {rep.case_bounds} -> {'CERTIFIED' if rep.certified else 'FAILED'}")
    if args.adaptive is not None:
        cfg = load_scenario(args.adaptive)
        w = cfg.workspace()
        verdict = validate_adaptive(w.physical_obstacles, w.planning_obstacles, cfg.params.delta_min,
                                    args.resolution, w.bounds)
        rec = {"scenario": cfg.name, **verdict.to_dict()}
        records.append(rec)
        failed |= not verdict
        print(f"adaptive {cfg.name} ({cfg.params.inflation}) at resolution {args.resolution}: "
              f"{'CERTIFIED' if verdict else f'COUNTEREXAMPLE {verdict}'}")
    if not records:
        print("nothing to certify: give trace files, --lemma1 or --adaptive", file=sys.stderr)
        return EXIT_USAGE
    if args.report:
        with open(args.report, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_metrics(args) -> int:
    trace = read_trace(args.trace)
    m = compute_metrics(trace)
    if args.csv:
        write_metrics(m, args.csv)
    else:
        w = csv.DictWriter(sys.stdout, fieldnames=["agent", "finished", "time_to_goal_s", "path_length_m"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(metrics_rows(m))
    print(_summary_line(m), file=sys.stderr)
    return EXIT_OK


def cmd_render(args) -> int:
    from . import plotting
    trace = read_trace(args.trace)
    out = Path(args.out or Path(args.trace).with_suffix(""))
    out.mkdir(parents=True, exist_ok=True)
    made = [plotting.plot_trajectories(trace, out / "trajectories.png"),
            plotting.plot_distances(trace, out / "distances.png")]
    if args.svg:
        made += plotting.render_svg_frames(trace, out / "frames", per=args.svg_per)
    print(f"wrote {len(made)} figure(s) to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="declos", description="LOS-aware decentralized multi-agent planning")
    p.add_argument("-v", "--verbose", action="store_true", help="log planner warnings")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("scenario", help="scenario file or shipped name (paper_11agents, corridor)")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--mode", choices=["declos", "clairvoyant"])
    r.add_argument("--inflation", choices=["full", "adaptive"])
    r.add_argument("--cap-length", type=float, help="corner cap length for adaptive inflation [m]")
    r.add_argument("--token-mode", choices=["round_robin", "bid_based"])
    r.add_argument("--out", help="output directory")
    r.add_argument("--plots", action="store_true", help="write PNG figures")
    r.add_argument("--svg", action="store_true", help="write SVG frames")
    r.add_argument("--svg-per", choices=["k", "tick"], default="k")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("suite", help="seed sweep comparing modes")
    s.add_argument("scenario")
    s.add_argument("--seeds", default="0-9", help="e.g. 0-9 or 1,4,7")
    s.add_argument("--modes", nargs="+", default=["declos", "clairvoyant"], choices=["declos", "clairvoyant"])
    s.add_argument("--agents", type=int, nargs="+", help="random setups with these agent counts")
    s.add_argument("--inflation", choices=["full", "adaptive"])
    s.add_argument("--out", help="output directory")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.add_argument("--no-traces", action="store_true", help="skip writing per-cell traces")
    s.add_argument("--plots", action="store_true", help="write PNG comparison figures")
    s.set_defaults(func=cmd_suite)

    c = sub.add_parser("certify", help="replay traces and run the geometric certifiers")
    c.add_argument("traces", nargs="*", help="trace files (.jsonl)")
    c.add_argument("--lemma1", nargs=3, type=float, metavar=("SIDE", "DELTA", "RES"),
                   help="grid-certify the non-LOS separation around a square obstacle")
    c.add_argument("--adaptive", metavar="SCENARIO", help="certify a scenario's inflated geometry")
    c.add_argument("--resolution", type=float, default=0.1, help="grid resolution for --adaptive [m]")
    c.add_argument("--report", help="also write all records to this JSON-lines file")
    c.set_defaults(func=cmd_certify)

    m = sub.add_parser("metrics", help="per-agent metrics of a trace as CSV")
    m.add_argument("trace")
    m.add_argument("--csv", help="write to this file instead of stdout")
    m.set_defaults(func=cmd_metrics)

    d = sub.add_parser("render", help="figures for a trace")
    d.add_argument("trace")
    d.add_argument("--out", help="output directory")
    d.add_argument("--svg", action="store_true", help="also write SVG frames")
    d.add_argument("--svg-per", choices=["k", "tick"], default="k")
    d.set_defaults(func=cmd_render)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TraceFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
