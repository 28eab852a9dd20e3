import filecmp
import math

import numpy as np
import pandas as pd
import pytest

from fogweaver.artifacts import RunArtifacts, find_runs, load_run, write_run
from fogweaver.bus import HOP_LOG_COLUMNS
from fogweaver.engines import run_scenario
from fogweaver.errors import MixedInstanceError
from fogweaver.metrics import (
    aggregate,
    convergence_check,
    convergence_trace,
    cumulative_hops,
    generational_distance,
    hop_statistics,
    normalize,
    spacing,
    write_report,
)


def nested_loop_gd(front, reference):
    total = 0.0
    for f in front:
        total += min(math.dist(f, r) for r in reference)
    return total / len(front)


def fake_run(scenario, rep, points, instance="same", hops=None, snapshots=None):
    front = pd.DataFrame([(a, b, "") for a, b in points], columns=["o1", "o2", "chromosome"])
    hops = hops if hops is not None else pd.DataFrame(columns=HOP_LOG_COLUMNS)
    snapshots = snapshots if snapshots is not None else pd.DataFrame(columns=["generation", "o1", "o2"])
    return RunArtifacts(scenario, rep, rep, front, snapshots, hops, {"instance": instance})


def test_gd_examples():
    assert generational_distance([(1, 2), (3, 1)], [(1, 2), (3, 1)]) == 0.0
    assert generational_distance([(1, 1)], [(0, 0)]) == pytest.approx(math.sqrt(2))


def test_gd_matches_nested_loop():
    rng = np.random.default_rng(0)
    front = [tuple(p) for p in rng.random((20, 2)) * 10]
    reference = [tuple(p) for p in rng.random((50, 2)) * 10]
    assert generational_distance(front, reference) == pytest.approx(nested_loop_gd(front, reference))


def test_gd_grows_with_dominated_point():
    reference = [(0, 2), (1, 1), (2, 0)]
    front = [(0, 2), (1, 1)]
    assert generational_distance(front + [(3, 3)], reference) >= generational_distance(front, reference)


def test_spacing_examples():
    assert spacing([(0, 4), (1, 3), (2, 2), (3, 1), (4, 0)]) == pytest.approx(0.0)
    assert spacing([(0, 0), (1, 1), (5, 5)]) == pytest.approx(math.sqrt(12))
    assert spacing([(0, 0), (3, 1)]) == 0.0
    with pytest.raises(ValueError):
        spacing([(1, 1)])


def test_spacing_is_permutation_invariant():
    rng = np.random.default_rng(1)
    front = rng.random((15, 2))
    assert spacing(front) == pytest.approx(spacing(front[rng.permutation(15)]))


def test_normalize_uses_bounds():
    scaled = normalize([(1, 10), (3, 30)], [1, 10], [3, 30])
    assert scaled.tolist() == [[0.0, 0.0], [1.0, 1.0]]
    assert normalize([(2, 5)], [2, 5], [2, 5]).tolist() == [[0.0, 0.0]]


def test_single_run_defines_the_reference():
    report = aggregate([fake_run("semi", 0, [(1, 3), (2, 2), (3, 1)])])
    assert report.per_run.loc[0, "gd"] == 0.0
    assert report.reference_front == [(1, 3), (2, 2), (3, 1)]


def test_identical_runs_get_identical_metrics():
    points = [(1, 3), (2, 2), (4, 1)]
    report = aggregate([fake_run("fully", 0, points), fake_run("fully", 1, points)])
    first, second = report.per_run.iloc[0], report.per_run.iloc[1]
    assert first["gd"] == second["gd"]
    assert first["spacing"] == second["spacing"]


def test_reference_front_and_contributions():
    runs = [
        fake_run("traditional", 0, [(1, 4), (3, 3)]),
        fake_run("semi", 0, [(1, 4), (2, 2)]),
        fake_run("neighbor", 0, [(4, 4), (5, 1)]),
    ]
    report = aggregate(runs)
    assert report.reference_front == [(1, 4), (2, 2), (5, 1)]
    assert report.contributions == {"traditional": 1, "semi": 2, "neighbor": 1}
    assert report.provenance[(1, 4)] == ["traditional/0", "semi/0"]
    assert report.per_run.set_index("scenario").loc["neighbor", "gd"] > 0
    # no input point strictly dominates a reference point
    for run in runs:
        for a, b in run.front[["o1", "o2"]].to_numpy():
            assert not any(a <= r1 and b <= r2 and (a < r1 or b < r2) for r1, r2 in report.reference_front)


def test_mixed_instances_refused():
    runs = [fake_run("semi", 0, [(1, 2), (2, 1)], "a"), fake_run("semi", 1, [(1, 2), (2, 1)], "b")]
    with pytest.raises(MixedInstanceError):
        aggregate(runs)
    assert len(aggregate(runs, allow_mixed=True).per_run) == 2


def test_singleton_front_spacing_is_undefined():
    report = aggregate([fake_run("semi", 0, [(1, 1)]), fake_run("semi", 1, [(1, 1), (2, 0)])])
    assert math.isnan(report.per_run.loc[0, "spacing"])
    assert report.to_dict()["perScenario"]["semi"]["spacing"]["median"] == pytest.approx(0.0)


def test_hop_statistics_and_curve():
    hops = pd.DataFrame(
        [
            (1, "command/join", 1, 5, 2, -1),
            (2, "command/1/sendSolution", 1, 2, 1, 0),
            (3, "solution/1", 2, 1, 1, 0),
            (4, "command/2/sendSolution", 2, 3, 3, 1),
            (5, "solution/2", 3, 2, 3, 1),
        ],
        columns=HOP_LOG_COLUMNS,
    )
    stats = hop_statistics(hops)
    assert stats["messageCount"] == 5
    assert stats["matingHops"] == 8
    assert stats["meanHopsPerMating"] == pytest.approx(4.0)
    assert stats["stdHopsPerMating"] == pytest.approx(2.0)
    assert cumulative_hops(hops)["cumulativeHops"].tolist() == [2, 8]


def test_convergence_trace_ends_at_zero():
    snapshots = pd.DataFrame(
        [(1, 3.0, 3.0), (2, 2.0, 2.0), (3, 1.0, 1.0)], columns=["generation", "o1", "o2"]
    )
    trace = convergence_trace(snapshots, window=2)
    assert trace == pytest.approx([math.sqrt(2), 0.0])


def test_artifact_hop_statistics_match_engine_counters(tmp_path, engine_cfg, small_instance, small_experiment):
    problem, overlay = small_instance
    result = run_scenario(engine_cfg("semi"), problem, overlay)
    run_dir = write_run(result, tmp_path, 0, small_experiment.echo(), problem, 7, 8)
    loaded = load_run(run_dir)
    stats = hop_statistics(loaded.hops)
    assert stats["messageCount"] == result.message_count
    assert stats["matingHops"] == result.mating_hops
    assert stats["totalHops"] == result.total_hops
    assert len(loaded.front) == len(result.final_front)


def test_report_files_are_reproducible(tmp_path, engine_cfg, small_instance, small_experiment):
    problem, overlay = small_instance
    for scenario in ("traditional", "fully"):
        result = run_scenario(engine_cfg(scenario), problem, overlay)
        write_run(result, tmp_path / "campaign", 0, small_experiment.echo(), problem, 7, 8)
    runs = find_runs(tmp_path / "campaign")
    assert [r.scenario for r in runs] == ["fully", "traditional"]

    write_report(aggregate(runs), tmp_path / "a")
    write_report(aggregate(find_runs(tmp_path / "campaign")), tmp_path / "b")
    names = ["metrics.csv", "report.json"] + [f"plotdata/{n}.csv" for n in (
        "fig4_scatter", "fig5_gd_box", "fig6_spacing_box", "fig7_evolution", "fig8_hops")]
    for name in names:
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)


def snapshot_frame(rows):
    return pd.DataFrame(rows, columns=["generation", "o1", "o2"])


def test_convergence_uses_last_ten_snapshots():
    rows = [(g, 100.0, 100.0) for g in (1, 2)] + [(g, 10.0, 10.0) for g in range(3, 13)]
    trace, converged = convergence_check(snapshot_frame(rows))
    assert trace == [0.0] * 10
    assert converged

    rows[2] = (3, 12.0, 10.0)
    trace, converged = convergence_check(snapshot_frame(rows))
    assert trace[0] == pytest.approx(2.0)
    assert not converged


def test_convergence_is_reported_per_run():
    late = snapshot_frame([(1, 30.0, 30.0), (2, 1.0, 1.0)])
    report = aggregate([
        fake_run("semi", 0, [(1, 1), (2, 0)]),
        fake_run("semi", 1, [(1, 1), (2, 0)], snapshots=late),
    ])
    assert report.per_run["converged"].tolist() == [True, False]
    summary = report.to_dict()["convergence"]
    assert summary["window"] == 10
    assert summary["converged"] == {"semi": 1}
    assert summary["notConverged"] == ["semi/1"]
    assert not report.self_reference
