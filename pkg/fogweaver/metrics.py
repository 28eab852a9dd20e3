"""
Front quality metrics and cross-run aggregation.

GD is the p=1 form: the mean over the front of the Euclidean distance to
the nearest reference point. Spacing is Schott's, with Manhattan nearest
neighbour distances. Both work on raw objective units unless normalized.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import pairwise_distances

from .artifacts import RunArtifacts
from .bus import NO_MATING
from .config import SCENARIOS
from .errors import MixedInstanceError
from .moo_core import Point, non_dominated, reference_front

logger = logging.getLogger(__name__)

METRIC_DEFINITIONS = {
    "gd": "mean over front points of the Euclidean distance to the nearest reference point (p=1)",
    "spacing": "Schott spacing, sample deviation of Manhattan nearest-neighbour distances",
    "meanHopsPerMating": "hops of mating-attributed messages divided by the number of matings",
    "convergenceGd": "largest GD of the last snapshot fronts against the final snapshot front",
    "converged": "convergenceGd within the tolerance times the mean norm of the final snapshot front",
}
STAT_COLUMNS = ["gd", "spacing", "meanHopsPerMating", "messageCount"]
CONVERGENCE_WINDOW = 10
CONVERGENCE_TOLERANCE = 0.10


def _points(points) -> np.ndarray:
    return np.asarray([tuple(p) for p in points], dtype=np.float64).reshape(-1, 2)


def generational_distance(front, reference) -> float:
    f, r = _points(front), _points(reference)
    if len(f) == 0 or len(r) == 0:
        raise ValueError("GD needs a non-empty front and reference")
    return float(pairwise_distances(f, r, metric="euclidean").min(axis=1).mean())


def spacing(front) -> float:
    f = _points(front)
    if len(f) < 2:
        raise ValueError("Spacing is undefined for fewer than two points")
    d = pairwise_distances(f, metric="manhattan")
    np.fill_diagonal(d, np.inf)
    nearest = d.min(axis=1)
    return float(np.sqrt(((nearest.mean() - nearest) ** 2).sum() / (len(f) - 1)))


def normalize(points, lower: Sequence[float], upper: Sequence[float]) -> np.ndarray:
    """Min-max scaling; a degenerate objective maps to zero."""
    p = _points(points)
    lower, upper = np.asarray(lower, dtype=np.float64), np.asarray(upper, dtype=np.float64)
    span = np.where(upper > lower, upper - lower, 1.0)
    return (p - lower) / span


def hop_statistics(hops: pd.DataFrame) -> dict:
    """Per-mating hop figures recomputed from a hop log."""
    mating = hops[hops["matingIndex"] != NO_MATING]
    per_mating = mating.groupby("matingIndex")["hops"].sum()
    return {
        "messageCount": int(len(hops)),
        "totalHops": int(hops["hops"].sum()),
        "matingHops": int(per_mating.sum()),
        "matingsWithMessages": int(len(per_mating)),
        "meanHopsPerMating": float(per_mating.mean()) if len(per_mating) else 0.0,
        "stdHopsPerMating": float(per_mating.std(ddof=0)) if len(per_mating) else 0.0,
    }


def cumulative_hops(hops: pd.DataFrame) -> pd.DataFrame:
    mating = hops[hops["matingIndex"] != NO_MATING]
    per_mating = mating.groupby("matingIndex")["hops"].sum().sort_index()
    return pd.DataFrame({"mating": np.arange(1, len(per_mating) + 1), "cumulativeHops": per_mating.cumsum().to_numpy()})


def _snapshot_fronts(snapshots: pd.DataFrame, window: int) -> List[np.ndarray]:
    generations = sorted(snapshots["generation"].unique())[-window:]
    return [snapshots[snapshots["generation"] == g][["o1", "o2"]].to_numpy() for g in generations]


def convergence_trace(snapshots: pd.DataFrame, window: int = CONVERGENCE_WINDOW) -> List[float]:
    """GD of each of the last `window` snapshots against the final one."""
    if snapshots.empty:
        return []
    fronts = _snapshot_fronts(snapshots, window)
    return [generational_distance(front, fronts[-1]) for front in fronts]


def convergence_check(
    snapshots: pd.DataFrame, window: int = CONVERGENCE_WINDOW, tolerance: float = CONVERGENCE_TOLERANCE
) -> Tuple[List[float], bool]:
    """
    A run has converged when every one of its last `window` snapshot fronts
    lies within `tolerance` of the final front, measured by GD and relative
    to the final front's magnitude (mean Euclidean norm of its points).
    """
    trace = convergence_trace(snapshots, window)
    if not trace:
        return [], True
    final = _snapshot_fronts(snapshots, 1)[-1]
    scale = float(np.linalg.norm(final, axis=1).mean())
    return trace, max(trace) <= tolerance * scale


def _front_points(run: RunArtifacts) -> List[Point]:
    return sorted({(float(a), float(b)) for a, b in run.front[["o1", "o2"]].to_numpy()})


def _clean(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


@dataclass
class MetricsReport:
    per_run: pd.DataFrame
    per_scenario: pd.DataFrame
    reference_front: List[Point]
    provenance: Dict[Point, List[str]]
    scenario_fronts: Dict[str, List[Point]]
    contributions: Dict[str, int]
    hop_curves: pd.DataFrame
    normalized: bool = False
    bounds: Optional[Tuple[List[float], List[float]]] = None
    plotdata: Dict[str, pd.DataFrame] = field(default_factory=dict)

    def scenario_stats(self) -> dict:
        stats = {}
        for scenario, row in self.per_scenario.iterrows():
            stats[scenario] = {
                col: {
                    "median": _clean(float(row[(col, "median")])),
                    "mean": _clean(float(row[(col, "mean")])),
                    "variance": _clean(float(row[(col, "var")])),
                }
                for col in STAT_COLUMNS
            }
        return stats

    @property
    def self_reference(self) -> bool:
        """A single run is its own reference front, so its GD is 0 by construction."""
        return len(self.per_run) == 1

    def convergence(self) -> dict:
        converged = self.per_run.groupby("scenario", sort=False)["converged"].sum()
        failed = self.per_run[~self.per_run["converged"].astype(bool)]
        return {
            "window": CONVERGENCE_WINDOW,
            "tolerance": CONVERGENCE_TOLERANCE,
            "converged": {scenario: int(n) for scenario, n in converged.items()},
            "notConverged": [f"{s}/{r}" for s, r in zip(failed["scenario"], failed["repetition"])],
        }

    def to_dict(self) -> dict:
        return {
            "definitions": METRIC_DEFINITIONS,
            "normalized": self.normalized,
            "bounds": self.bounds,
            "runs": int(len(self.per_run)),
            "referenceFront": {
                "points": [list(p) for p in self.reference_front],
                "provenance": [self.provenance[p] for p in self.reference_front],
            },
            "contributions": self.contributions,
            "perScenario": self.scenario_stats(),
            "convergence": self.convergence(),
            "selfReference": self.self_reference,
        }


def _check_instances(runs: List[RunArtifacts], allow_mixed: bool):
    instances = sorted({r.instance for r in runs})
    if len(instances) > 1:
        if not allow_mixed:
            raise MixedInstanceError(
                f"Runs come from {len(instances)} different problem instances; pass --allow-mixed to aggregate anyway"
            )
        logger.warning("Aggregating runs over %d different problem instances", len(instances))


def aggregate(runs: List[RunArtifacts], allow_mixed: bool = False, normalize_metrics: bool = False) -> MetricsReport:
    """
    Global reference front from every run of every scenario, per-run GD and
    Spacing against it, hop statistics from the hop logs and per-scenario
    median / mean / variance.
    """
    if not runs:
        raise ValueError("No runs to aggregate")
    _check_instances(runs, allow_mixed)
    runs = sorted(runs, key=lambda r: (SCENARIOS.index(r.scenario), r.repetition))

    fronts = {r.label: _front_points(r) for r in runs}
    reference = reference_front(fronts.values())
    reference_set = set(reference)
    provenance = {p: [label for label, pts in fronts.items() if p in set(pts)] for p in reference}

    bounds = None
    if normalize_metrics:
        ref = _points(reference)
        bounds = (ref.min(axis=0).tolist(), ref.max(axis=0).tolist())

    def scaled(points):
        return normalize(points, *bounds) if bounds else _points(points)

    rows, curves = [], []
    for run in runs:
        front = fronts[run.label]
        try:
            s = spacing(scaled(front))
        except ValueError:
            logger.warning("Run %s has a single-point front, spacing undefined", run.label)
            s = float("nan")
        hop_stats = hop_statistics(run.hops)
        counters = run.meta.get("counters", {})
        if counters and counters.get("matingHops") != hop_stats["matingHops"]:
            logger.warning("Run %s: hop log disagrees with recorded counters", run.label)
        trace, converged = convergence_check(run.snapshots)
        rows.append(
            {
                "scenario": run.scenario,
                "repetition": run.repetition,
                "seed": run.seed,
                "gd": generational_distance(scaled(front), scaled(reference)),
                "spacing": s,
                "frontSize": len(front),
                "meanHopsPerMating": hop_stats["meanHopsPerMating"],
                "stdHopsPerMating": hop_stats["stdHopsPerMating"],
                "messageCount": hop_stats["messageCount"],
                "totalHops": hop_stats["totalHops"],
                "convergenceGd": max(trace) if trace else 0.0,
                "converged": converged,
            }
        )
        curve = cumulative_hops(run.hops)
        curve.insert(0, "repetition", run.repetition)
        curve.insert(0, "scenario", run.scenario)
        curves.append(curve)

    per_run = pd.DataFrame(rows)
    per_scenario = per_run.groupby("scenario", sort=False)[STAT_COLUMNS].agg(["median", "mean", "var"])

    scenario_fronts, contributions = {}, {}
    for scenario in per_run["scenario"].unique():
        members = [fronts[r.label] for r in runs if r.scenario == scenario]
        scenario_fronts[scenario] = non_dominated(sorted({p for f in members for p in f}))
        contributions[scenario] = sum(1 for p in set(scenario_fronts[scenario]) if p in reference_set)

    hop_curves = pd.concat(curves, ignore_index=True) if curves else pd.DataFrame()
    report = MetricsReport(
        per_run=per_run,
        per_scenario=per_scenario,
        reference_front=reference,
        provenance=provenance,
        scenario_fronts=scenario_fronts,
        contributions=contributions,
        hop_curves=hop_curves,
        normalized=normalize_metrics,
        bounds=bounds,
    )
    report.plotdata = plot_frames(report, runs)
    return report


def plot_frames(report: MetricsReport, runs: List[RunArtifacts]) -> Dict[str, pd.DataFrame]:
    """One table per figure: front scatter, GD and Spacing boxes, front evolution, hop curves."""
    scatter = [
        {"series": scenario, "o1": o1, "o2": o2, "inReference": (o1, o2) in set(report.reference_front)}
        for scenario, front in report.scenario_fronts.items()
        for o1, o2 in front
    ]
    scatter += [{"series": "reference", "o1": o1, "o2": o2, "inReference": True} for o1, o2 in report.reference_front]

    evolution = []
    for run in runs:
        snap = run.snapshots.copy()
        snap.insert(0, "repetition", run.repetition)
        snap.insert(0, "scenario", run.scenario)
        evolution.append(snap)

    curves = report.hop_curves
    if not curves.empty:
        per_run = curves.assign(series="run")
        mean = (
            curves.groupby(["scenario", "mating"], sort=False)["cumulativeHops"].mean().reset_index()
            .assign(repetition=-1, series="mean")
        )
        hops = pd.concat([per_run, mean[per_run.columns]], ignore_index=True)
    else:
        hops = pd.DataFrame(columns=["scenario", "repetition", "mating", "cumulativeHops", "series"])

    return {
        "fig4_scatter": pd.DataFrame(scatter, columns=["series", "o1", "o2", "inReference"]),
        "fig5_gd_box": report.per_run[["scenario", "repetition", "gd"]],
        "fig6_spacing_box": report.per_run[["scenario", "repetition", "spacing"]],
        "fig7_evolution": pd.concat(evolution, ignore_index=True) if evolution else pd.DataFrame(),
        "fig8_hops": hops,
    }


def write_report(report: MetricsReport, out_dir) -> Path:
    out_dir = Path(out_dir)
    plot_dir = out_dir / "plotdata"
    plot_dir.mkdir(parents=True, exist_ok=True)
    report.per_run.to_csv(out_dir / "metrics.csv", index=False)
    with (out_dir / "report.json").open("w", encoding="utf-8") as f_out:
        json.dump(report.to_dict(), f_out, indent=2, sort_keys=True)
        f_out.write("\n")
    for name, frame in report.plotdata.items():
        frame.to_csv(plot_dir / f"{name}.csv", index=False)
    return out_dir
