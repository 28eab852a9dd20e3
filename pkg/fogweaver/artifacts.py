"""
Run directories: front.csv, snapshots.csv, hops.csv and run.json. Every
file is a pure function of the run, so two deterministic runs of the same
config produce byte-identical directories.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import pandas as pd

from .bus import HOP_LOG_COLUMNS, hop_log_frame
from .engines import RunResult
from .fapp import ProblemInstance, problem_to_dict
from .topology import graph_to_dict

logger = logging.getLogger(__name__)

FRONT_COLUMNS = ["o1", "o2", "chromosome"]
SNAPSHOT_COLUMNS = ["generation", "o1", "o2"]
RUN_FILE = "run.json"


def run_dir_for(out_dir, scenario: str, repetition: int) -> Path:
    return Path(out_dir) / scenario / f"rep_{repetition:02d}"


def instance_fingerprint(problem: ProblemInstance) -> str:
    """Digest of the topology and problem documents; runs on one instance share it."""
    doc = {"graph": graph_to_dict(problem.graph), "problem": problem_to_dict(problem)}
    data = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.blake2b(data, digest_size=16).hexdigest()


def _write_json(path: Path, data: dict):
    with path.open("w", encoding="utf-8") as f_out:
        json.dump(data, f_out, indent=2, sort_keys=True, allow_nan=False)
        f_out.write("\n")


def front_frame(result: RunResult) -> pd.DataFrame:
    return pd.DataFrame(
        [(p.o1, p.o2, p.chromosome or "") for p in result.final_front], columns=FRONT_COLUMNS
    )


def snapshot_frame(result: RunResult) -> pd.DataFrame:
    rows = [(g, o1, o2) for g, front in enumerate(result.snapshots, start=1) for o1, o2 in front]
    return pd.DataFrame(rows, columns=SNAPSHOT_COLUMNS)


def write_run(
    result: RunResult,
    out_dir,
    repetition: int,
    config_echo: dict,
    problem: ProblemInstance,
    topology_seed: int,
    problem_seed: int,
) -> Path:
    run_dir = run_dir_for(out_dir, result.scenario, repetition)
    run_dir.mkdir(parents=True, exist_ok=True)
    front_frame(result).to_csv(run_dir / "front.csv", index=False)
    snapshot_frame(result).to_csv(run_dir / "snapshots.csv", index=False)
    hop_log_frame(result.hop_log).to_csv(run_dir / "hops.csv", index=False)
    _write_json(
        run_dir / RUN_FILE,
        {
            "status": "complete",
            "scenario": result.scenario,
            "repetition": repetition,
            "seed": result.seed,
            "topologySeed": topology_seed,
            "problemSeed": problem_seed,
            "instance": instance_fingerprint(problem),
            "config": config_echo,
            "counters": result.counters(),
            "audits": result.audits,
        },
    )
    logger.info("Wrote %s", run_dir)
    return run_dir


def write_failure(out_dir, scenario: str, repetition: int, seed: int, config_echo: dict, error: Exception) -> Path:
    """Flags a run directory whose engine aborted; metrics skip it."""
    run_dir = run_dir_for(out_dir, scenario, repetition)
    run_dir.mkdir(parents=True, exist_ok=True)
    _write_json(
        run_dir / RUN_FILE,
        {
            "status": "failed",
            "scenario": scenario,
            "repetition": repetition,
            "seed": seed,
            "config": config_echo,
            "error": f"{type(error).__name__}: {error}",
        },
    )
    return run_dir


@dataclass
class RunArtifacts:
    scenario: str
    repetition: int
    seed: int
    front: pd.DataFrame
    snapshots: pd.DataFrame
    hops: pd.DataFrame
    meta: dict

    @property
    def instance(self) -> Optional[str]:
        return self.meta.get("instance")

    @property
    def label(self) -> str:
        return f"{self.scenario}/{self.repetition}"


def load_run(run_dir) -> RunArtifacts:
    run_dir = Path(run_dir)
    with (run_dir / RUN_FILE).open("r", encoding="utf-8") as f_in:
        meta = json.load(f_in)
    front = pd.read_csv(run_dir / "front.csv", dtype={"chromosome": str}, keep_default_na=False)
    snapshots = pd.read_csv(run_dir / "snapshots.csv")
    hops = pd.read_csv(run_dir / "hops.csv")
    if list(hops.columns) != HOP_LOG_COLUMNS:
        hops = pd.DataFrame(columns=HOP_LOG_COLUMNS)
    return RunArtifacts(meta["scenario"], int(meta["repetition"]), int(meta["seed"]), front, snapshots, hops, meta)


def find_runs(campaign_dir) -> List[RunArtifacts]:
    """Every completed run below campaign_dir, ordered by scenario then repetition."""
    runs = []
    for path in sorted(Path(campaign_dir).glob(f"**/{RUN_FILE}")):
        with path.open("r", encoding="utf-8") as f_in:
            status = json.load(f_in).get("status")
        if status != "complete":
            logger.warning("Skipping %s run at %s", status, path.parent)
            continue
        runs.append(load_run(path.parent))
    return sorted(runs, key=lambda r: (r.scenario, r.repetition))
