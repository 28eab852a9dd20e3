#!/usr/bin/env python3
"""
Fog placement testbed for distributed NSGA-II designs.

Usage:
    fogweaver topology [--config FILE] [--out DIR]
    fogweaver run --scenario {traditional,semi,fully,neighbor} [--rep N] [--config FILE] [--out DIR]
    fogweaver campaign [--config FILE] [--out DIR]
    fogweaver metrics [CAMPAIGN_DIR] [--allow-mixed] [--normalize]

Example:
    fogweaver run --scenario semi --rep 0 --config configs/default.json
    fogweaver campaign --config configs/default.json --out runs/default
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from pydantic import ValidationError
from tqdm import tqdm

from . import artifacts
from .config import SCENARIOS, ExperimentConfig, load_config, resolve_output_dir
from .engines import run_scenario
from .errors import ConfigError, FogweaverError
from .fapp import build_problem, save_problem
from .logs import log_run
from .metrics import aggregate, write_report
from .topology import generate_topology, place_workers, save_graph, topology_summary

logger = logging.getLogger(__name__)


def effective_config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    update = {}
    if getattr(args, "seed", None) is not None:
        update["seed_base"] = args.seed
    if getattr(args, "mode", None):
        update["mode"] = args.mode
    if not update:
        return cfg
    try:
        return ExperimentConfig.model_validate({**cfg.model_dump(), **update})
    except ValidationError as e:
        raise ConfigError(f"Invalid command-line override:\n{e}") from e


def build_instance(cfg: ExperimentConfig):
    graph = generate_topology(cfg.topology, cfg.topology_seed)
    problem = build_problem(graph, cfg.problem, cfg.problem_seed)
    overlay = place_workers(graph, cfg.topology.worker_count, cfg.topology.neighborhood_radius)
    return graph, problem, overlay


def write_instance(cfg: ExperimentConfig, out_dir: Path, graph, problem):
    topology_path = save_graph(graph, out_dir / "topology.json")
    save_problem(problem, out_dir / "problem.json", topology_path.name, cfg.topology_seed)


def cmd_topology(args) -> int:
    cfg = effective_config(args)
    out_dir = resolve_output_dir(args.out, cfg)
    graph, problem, overlay = build_instance(cfg)
    write_instance(cfg, out_dir, graph, problem)
    summary = topology_summary(graph, overlay)
    print(f"[OK] Topology and problem written to {out_dir}")
    print(json.dumps(summary, indent=2))
    return 0


def execute_run(cfg: ExperimentConfig, out_dir: Path, scenario: str, repetition: int, problem, overlay, log_dir=None) -> Path:
    engine_cfg = cfg.engine_for(scenario, repetition)
    echo = cfg.echo()
    try:
        result = run_scenario(engine_cfg, problem, overlay)
    except FogweaverError as e:
        artifacts.write_failure(out_dir, scenario, repetition, engine_cfg.seed, echo, e)
        raise
    run_dir = artifacts.write_run(
        result, out_dir, repetition, echo, problem, cfg.topology_seed, cfg.problem_seed
    )
    log_run(result, echo, run_dir, repetition, log_dir)
    failed = [name for name, ok in result.audits.items() if ok is False]
    if failed:
        print(f"[WARNING] {scenario}/{repetition}: audits failed: {', '.join(failed)}")
    return run_dir


def cmd_run(args) -> int:
    cfg = effective_config(args)
    if not 0 <= args.rep < cfg.repetitions:
        raise ConfigError(f"--rep must lie in [0, {cfg.repetitions})")
    out_dir = resolve_output_dir(args.out, cfg)
    graph, problem, overlay = build_instance(cfg)
    write_instance(cfg, out_dir, graph, problem)
    run_dir = execute_run(cfg, out_dir, args.scenario, args.rep, problem, overlay, args.log_dir)
    print(f"[OK] {args.scenario} repetition {args.rep} written to {run_dir}")
    return 0


def report_warnings(report):
    if report.self_reference:
        print("[WARNING] Only one run: its front is its own reference, GD is 0 by self-reference")
    failed = report.convergence()["notConverged"]
    if failed:
        print(f"[WARNING] Not converged over the last snapshots: {', '.join(failed)}")


def cmd_metrics(args) -> int:
    campaign_dir = Path(args.campaign_dir) if args.campaign_dir else resolve_output_dir(args.out, load_config(args.config))
    runs = artifacts.find_runs(campaign_dir)
    if not runs:
        print(f"[ERROR] No completed runs found under {campaign_dir}")
        return 3
    report = aggregate(runs, allow_mixed=args.allow_mixed, normalize_metrics=args.normalize)
    report_warnings(report)
    write_report(report, campaign_dir)
    print(f"[OK] Metrics over {len(runs)} runs written to {campaign_dir}")
    return 0


def cmd_campaign(args) -> int:
    cfg = effective_config(args)
    out_dir = resolve_output_dir(args.out, cfg)
    graph, problem, overlay = build_instance(cfg)
    write_instance(cfg, out_dir, graph, problem)

    scenarios = [args.scenario] if args.scenario else list(SCENARIOS)
    jobs = [(s, r) for s in scenarios for r in range(cfg.repetitions)]
    for scenario, rep in tqdm(jobs, desc="Runs", unit="run"):
        execute_run(cfg, out_dir, scenario, rep, problem, overlay, args.log_dir)
    print(f"[OK] {len(jobs)} runs written to {out_dir}")

    report = aggregate(artifacts.find_runs(out_dir), allow_mixed=args.allow_mixed)
    report_warnings(report)
    write_report(report, out_dir)
    print(f"[OK] Metrics written to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fogweaver",
        description="Compare NSGA-II execution designs on fog application placement",
    )
    parser.add_argument("--verbose", action="store_true", help="Show debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, help="Path to JSON config file (defaults when omitted)")
        p.add_argument("--out", type=str, help="Output directory (overrides outputDir and FOGWEAVER_OUT)")
        p.add_argument("--seed", type=int, help="Override seedBase")
        p.add_argument("--mode", choices=["deterministic", "concurrent"], help="Override execution mode")
        p.add_argument("--log-dir", type=str, help="Directory for JSON run logs (overrides FOGWEAVER_LOG_DIR)")

    p = sub.add_parser("topology", help="Generate the topology and problem instance")
    common(p)
    p.set_defaults(handler=cmd_topology)

    p = sub.add_parser("run", help="Execute one scenario repetition")
    common(p)
    p.add_argument("--scenario", choices=SCENARIOS, required=True)
    p.add_argument("--rep", type=int, default=0, help="Repetition index (default: 0)")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("campaign", help="Run every scenario x repetition, then the metrics")
    common(p)
    p.add_argument("--scenario", choices=SCENARIOS, help="Restrict the campaign to one scenario")
    p.add_argument("--allow-mixed", action="store_true")
    p.set_defaults(handler=cmd_campaign)

    p = sub.add_parser("metrics", help="Aggregate the runs of a campaign directory")
    p.add_argument("campaign_dir", nargs="?", help="Campaign directory (default: resolved output directory)")
    p.add_argument("--config", type=str)
    p.add_argument("--out", type=str)
    p.add_argument("--allow-mixed", action="store_true", help="Aggregate runs from different instances")
    p.add_argument("--normalize", action="store_true", help="Min-max normalize objectives before GD/Spacing")
    p.set_defaults(handler=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except ConfigError as e:
        print(f"[ERROR] {e}")
        return 2
    except ValidationError as e:
        print(f"[ERROR] Invalid configuration: {e}")
        return 2
    except FogweaverError as e:
        print(f"[ERROR] {e}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
