"""Command-line front end: ``ospde solve | verify | sweep``.

Exit codes: 0 success, 1 configuration error, 2 audit failure, 3 numerical
failure, 4 a verification check failed.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .analysis.experiments import SCHEMA, ExperimentReport, write_summary_csv
from .config import ALIASES, ConfigError, RunConfig, build_problem, load, parse_seed_list
from .io import trajectory_from_solution, write_binary, write_csv
from .model import AuditError, contraction_check
from .solver import NumericalError, solve_paths
from .suites import SUITES, metrics_report, run_suite

EXIT_OK, EXIT_CONFIG, EXIT_AUDIT, EXIT_NUMERICAL, EXIT_FAILED = 0, 1, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat section.key = value config file")
    common.add_argument("--seeds", type=int, help="use seeds 0..N-1")
    common.add_argument("--seed-list", help="comma-separated seeds, e.g. 3,5,8")
    common.add_argument("--out", help="output directory (default: output.dir)")
    common.add_argument("--threads", type=int, help="worker threads (overrides OSPDE_THREADS)")
    common.add_argument("--require-strong", action="store_true",
                        help="require the strong contraction inequality")
    ap = argparse.ArgumentParser(prog="ospde", description="Obstacle SPDE solver and verification harness")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve the configured problem")
    v = sub.add_parser("verify", parents=[common], help="run a verification suite")
    v.add_argument("--suite", default="all", help=f"one of {', '.join(SUITES + ('all',))}")
    s = sub.add_parser("sweep", parents=[common], help="rerun the base experiment over parameter values")
    s.add_argument("--param", required=True, help=f"dotted config key or alias ({', '.join(ALIASES)})")
    s.add_argument("--values", required=True, help="comma-separated values")
    return ap


def _load(args) -> RunConfig | None:
    cfg = load(args.config) if args.config else None
    if args.seeds is not None or args.seed_list:
        cfg = cfg or RunConfig()
        if args.seed_list:
            parse_seed_list(args.seed_list, "--seed-list")
            cfg = cfg.with_value("experiment.seed_list", args.seed_list)
        elif args.seeds < 1:
            raise ConfigError("--seeds", "must be >= 1")
        else:
            cfg = replace(cfg, experiment=replace(cfg.experiment, seeds=args.seeds, seed_list=""))
    return cfg


def _out_dir(args, cfg: RunConfig | None) -> Path:
    out = Path(args.out or (cfg.output.dir if cfg else "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_reports(reports: list[ExperimentReport], out: Path, command: str) -> str:
    states = {r.status for r in reports}
    status = "fail" if "fail" in states else ("inapplicable" if "inapplicable" in states else "pass")
    doc = {"schema": SCHEMA, "command": command, "status": status, "reports": [r.to_dict() for r in reports]}
    (out / "summary.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    write_summary_csv(reports, out / "table.csv")
    return status


def cmd_solve(args) -> int:
    cfg = _load(args)
    if cfg is None:
        raise ConfigError("--config", "solve needs a config file")
    prob = build_problem(cfg)
    sc = cfg.solver_config()
    seeds = cfg.seeds()
    sol = solve_paths(prob, sc, seeds[:1], require_strong=args.require_strong)
    out = _out_dir(args, cfg)
    tr = trajectory_from_solution(sol, 0)
    if cfg.output.trajectory in ("bin", "both"):
        write_binary(tr, out / "trajectory.bin")
    if cfg.output.trajectory in ("csv", "both"):
        write_csv(tr, out / "trajectory.csv")
    rep = metrics_report(cfg, args.threads)
    rep.name = "solve"
    _write_reports([rep], out, "solve")
    if rep.failures:
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load(args)
    if args.suite not in SUITES + ("all",):
        raise ConfigError("--suite", f"unknown suite {args.suite!r}")
    if cfg is not None and args.require_strong:
        c = build_problem(cfg).coeffs
        if not contraction_check(c.C, c.alpha, c.beta, cfg.grid.a)[1]:
            raise AuditError("strong contraction a + b^2/2 + 72 b^2 < lam fails")
    reports = run_suite(args.suite, cfg, args.threads)
    status = _write_reports(reports, _out_dir(args, cfg), f"verify {args.suite}")
    for r in reports:
        print(f"{r.name:28s} {r.status}")
    return EXIT_FAILED if status == "fail" else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args) or RunConfig()
    cfg.get(args.param)  # unknown keys raise ConfigError
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values", "no values given")
    out = _out_dir(args, cfg)
    reports = []
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "metric", "estimate", "stderr"])
        for v in values:
            c = cfg.with_value(args.param, v)
            c.solver_config()
            rep = metrics_report(c, args.threads)
            rep.config["sweep"] = {"param": args.param, "value": c.get(args.param)}
            reports.append(rep)
            for metric, agg in sorted(rep.aggregates.items()):
                w.writerow([v, metric, repr(agg["mean"]), repr(agg["stderr"])])
    status = _write_reports(reports, out, f"sweep {args.param}")
    return EXIT_FAILED if status == "fail" else EXIT_OK


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AuditError as exc:
        print(f"audit failure: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
