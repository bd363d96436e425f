"""Command-line entry point: run, compare, probe.

Exit codes: 0 ok, 1 configuration/usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys
from importlib import resources

from . import migration, report, sim
from .model import ScenarioError, load_scenario

BUNDLED = ("simple", "openface", "yolo")


class _Parser(argparse.ArgumentParser):
    # usage problems are configuration errors (exit 1), not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _resolve_scenario(name: str) -> str:
    """A path, or the name of one of the bundled scenarios."""
    if os.path.exists(name):
        return name
    if name in BUNDLED:
        return str(resources.files("edgemigsim").joinpath(f"scenarios/{name}.yaml"))
    raise ScenarioError(f"scenario {name!r}: not a file and not one of {BUNDLED}")


def _parse_seeds(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",") if s.strip() != ""]


def _default_out() -> str:
    return os.environ.get("EDGEMIGSIM_OUT", "out")


def _build_parser() -> _Parser:
    p = _Parser(prog="edgemigsim",
                description="Coordinated container-migration / handover simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate one (scenario, planner, seed) combination")
    run_p.add_argument("--scenario", required=True)
    run_p.add_argument("--planner", required=True, choices=sim.PLANNERS)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--duration", type=float, default=None, metavar="S")
    run_p.add_argument("--out", default=None)

    cmp_p = sub.add_parser("compare", help="run planner/seed combinations and aggregate")
    cmp_p.add_argument("--scenario", required=True)
    cmp_p.add_argument("--planners", default=",".join(sim.PLANNERS))
    cmp_p.add_argument("--seeds", default="1..5", help="N..M inclusive, or comma list")
    cmp_p.add_argument("--duration", type=float, default=None, metavar="S")
    cmp_p.add_argument("--out", default=None)

    probe_p = sub.add_parser("probe", help="print per-app checkpoint sizes and time estimates")
    probe_p.add_argument("--scenario", required=True)
    return p


def _cmd_run(args) -> int:
    world = load_scenario(_resolve_scenario(args.scenario))
    out = sim.run(world, args.planner, seed=args.seed, duration_s=args.duration)
    out_dir = args.out or _default_out()
    out.write(out_dir)
    total_dt = sum(v["total"] for v in out.downtime.values())
    completed = sum(out.completed.values())
    lost = sum(out.lost.values())
    print(f"run planner={out.planner} seed={out.seed} duration={out.duration_s}s "
          f"completed={completed} lost={lost} downtime={total_dt:.3f}s -> {out_dir}")
    return 0


def _cmd_compare(args) -> int:
    planners = sorted({p.strip() for p in args.planners.split(",") if p.strip()})
    unknown = [p for p in planners if p not in sim.PLANNERS]
    if unknown:
        raise ScenarioError(f"unknown planner(s) {unknown}; choose from {sim.PLANNERS}")
    seeds = _parse_seeds(args.seeds)
    if not seeds:
        raise ScenarioError("no seeds given")
    scenario_path = _resolve_scenario(args.scenario)
    out_dir = args.out or _default_out()
    outputs = []
    for pl in planners:
        for seed in seeds:
            world = load_scenario(scenario_path)
            out = sim.run(world, pl, seed=seed, duration_s=args.duration)
            out.write(os.path.join(out_dir, f"{pl}-s{seed}"))
            outputs.append(out)
    summary = report.summarize(outputs)
    report.emit(summary, out_dir, fmt="csv")

    print(f"{'app':<10} {'planner':<13} {'mean E2E ms':>12} {'std':>9} "
          f"{'downtime s':>11} {'completed':>10} {'lost':>6}")
    for key in sorted(summary.groups):
        g = summary.groups[key]
        print(f"{g.app:<10} {g.planner:<13} {g.total_mean:>12.2f} {g.total_std:>9.2f} "
              f"{g.downtime_mean_s:>11.3f} {g.completed:>10} {g.lost:>6}")
    for (app, pl, metric), val in sorted(summary.reductions.items()):
        label = "E2E delay" if metric == "e2e" else "downtime"
        print(f"orchestrated vs {pl} ({app}): {val:.1f}% lower {label}")
    return 0


def _cmd_probe(args) -> int:
    world = load_scenario(_resolve_scenario(args.scenario))
    edges = [sid for sid in sorted(world.servers)
             if world.servers[sid].tier != "cloud"]
    src_id = edges[0] if edges else sorted(world.servers)[0]
    dst_id = edges[1] if len(edges) > 1 else src_id
    src, dst = world.servers[src_id], world.servers[dst_id]
    print(f"{'app':<10} {'image_mb':>9} {'chkpt_mb':>9} {'delta_mb':>9} {'reduction':>10} "
          f"{'t_pre_mig_s':>12} {'t_mig_s':>9}  ({src_id}->{dst_id})")
    for name in sorted(world.profiles):
        prof = world.profiles[name]
        reduction = (1.0 - prof.delta_bytes / prof.checkpoint_bytes) * 100.0
        est = migration.estimate_times(prof, src, dst, world.links)
        print(f"{name:<10} {prof.image_bytes / 1e6:>9.2f} {prof.checkpoint_bytes / 1e6:>9.2f} "
              f"{prof.delta_bytes / 1e6:>9.4f} {reduction:>9.2f}% "
              f"{est.t_pre_mig:>12.3f} {est.t_mig:>9.3f}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        return _cmd_probe(args)
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
