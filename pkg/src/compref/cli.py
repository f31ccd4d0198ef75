"""Command line front-end: ``compref synthesize | simulate | verify | stats``.

Exit codes: 0 success, 1 configuration error, 2 unrealizable subsystem,
3 failed verification or simulation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io
from .composition import (Undefined, check_controller, check_feedback_refinement, check_nonblocking,
                          check_partitions, closed_loop_trials)
from .scenarios import ConfigError, RunConfig, build_problem
from .synthesis import synthesize
from .ufad import table1_report

OK, CONFIG_ERROR, UNREALIZABLE, FAILED = 0, 1, 2, 3


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for key in ("scenario", "trials", "seed", "max_depth", "out", "threads"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def _subsystem_stats(outcome) -> dict:
    if hasattr(outcome, "controller"):
        return {"status": "ok", "evaluations": outcome.evaluations, "trace": outcome.trace,
                "refinements": len(outcome.trace), "max_depth": outcome.max_depth,
                "controller_entries": len(outcome.controller)}
    return {"status": "unrealizable", "evaluations": outcome.evaluations, "trace": outcome.trace,
            "refinements": len(outcome.trace), "max_depth": outcome.depth, "step": outcome.step,
            "cell": outcome.cell}


def cmd_synthesize(cfg: RunConfig) -> int:
    problem = build_problem(cfg)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    syn = synthesize(problem, max_depth=cfg.max_depth, threads=cfg.threads)
    stats = {
        "scenario": cfg.scenario,
        "max_depth": cfg.max_depth,
        "status": "ok" if syn.ok else "unrealizable",
        "evaluations": syn.evaluations,
        "subsystems": {str(problem.subsystems[i].id): _subsystem_stats(o) for i, o in enumerate(syn.outcomes)},
        "table1": table1_report(problem, syn),
    }
    io.write_json(out / "stats.json", stats)
    io.write_json(out / "timing.json", {"wall_time_s": syn.wall_time})
    io.write_artifacts(out, syn.results)
    for f in syn.failures:
        coords = problem.grid.cell_coords(f.cell)
        print(f"unrealizable: subsystem {f.subsystem} has no valid symbol at step {f.step} "
              f"(cell {f.cell}, grid coordinates {coords}) at refinement depth {f.depth}", file=sys.stderr)
    if not syn.ok:
        return UNREALIZABLE
    print(f"synthesized {len(syn.results)} controllers with {syn.evaluations} reach evaluations "
          f"in {syn.wall_time:.1f} s; artifacts in {out}")
    return OK


def _load_controller(cfg: RunConfig):
    problem = build_problem(cfg)
    try:
        return io.read_artifacts(problem, cfg.out_dir)
    except FileNotFoundError as exc:
        raise ConfigError(f"missing synthesis artifacts ({exc.filename}); run synthesize first") from exc
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"malformed synthesis artifacts in {cfg.out_dir}: {exc}") from exc


def cmd_simulate(cfg: RunConfig) -> int:
    gc = _load_controller(cfg)
    try:
        rep = closed_loop_trials(gc, cfg.trials, seed=cfg.seed)
    except Undefined as exc:
        print(f"simulation impossible: {exc}", file=sys.stderr)
        return FAILED
    violations = [{"trial": b, "step": k, "state": [float(v) for v in rep.trajectories[b, k]]}
                  for b, k in rep.undefined]
    report = {"trials": rep.trials, "satisfied": rep.satisfied, "rate": rep.rate, "seed": cfg.seed,
              "undefined_control": violations}
    io.write_json(cfg.out_dir / "simulate.json", report)
    io.write_traces(cfg.out_dir / "traces.csv", rep.trajectories)
    print(f"{rep.satisfied}/{rep.trials} trajectories satisfy the plan")
    return OK if rep.ok else FAILED


def cmd_verify(cfg: RunConfig) -> int:
    gc = _load_controller(cfg)
    checks = {
        "partitions": check_partitions(gc),
        "controller": check_controller(gc),
        "nonblocking": check_nonblocking(gc, samples=min(cfg.samples, 100), seed=cfg.seed),
        "feedback_refinement": check_feedback_refinement(gc, samples=cfg.samples, seed=cfg.seed),
    }
    report = {}
    for name, rep in checks.items():
        failures, checked = rep.failures, rep.checked
        report[name] = {"ok": rep.ok, "checked": checked, "failures": failures[:50], "n_failures": len(failures)}
        print(f"{name:20s} {'pass' if rep.ok else 'FAIL'} ({checked} checked, {len(failures)} failures)")
    report["ok"] = all(rep.ok for rep in checks.values())
    io.write_json(cfg.out_dir / "verify.json", report)
    return OK if report["ok"] else FAILED


def cmd_stats(cfg: RunConfig) -> int:
    problem = build_problem(cfg)
    report = table1_report(problem)
    stats_file = cfg.out_dir / "stats.json"
    if stats_file.exists():
        measured = json.loads(stats_file.read_text())
        report["compositional_refinement"] = measured["table1"]["compositional_refinement"]
    rows = [("centralized", "no refinement", "centralized_no_refinement"),
            ("centralized", "refinement", "centralized_refinement"),
            ("compositional", "no refinement", "compositional_no_refinement"),
            ("compositional", "refinement", "compositional_refinement")]
    for a, b, key in rows:
        entry = report[key]
        count = "not run" if entry["count"] is None else f"{entry['count']:.4g}"
        print(f"{a:14s} {b:14s} {count:>12s}  [{entry['kind']}]")
    io.write_json(cfg.out_dir / "table1.json", report)
    return OK


COMMANDS = {"synthesize": cmd_synthesize, "simulate": cmd_simulate, "verify": cmd_verify, "stats": cmd_stats}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compref", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log refinement progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="TOML run configuration")
        p.add_argument("--scenario", help="built-in scenario (ufad8, toy1d, toy2d) or affine")
        p.add_argument("--out", help="artifact directory")
        p.add_argument("--max-depth", dest="max_depth", type=int, help="refinement depth limit (default 6)")
        p.add_argument("--threads", type=int, help="worker processes for synthesis")
        p.add_argument("--trials", type=int, help="closed-loop trials for simulate")
        p.add_argument("--seed", type=int, help="random seed for simulate and verify")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
