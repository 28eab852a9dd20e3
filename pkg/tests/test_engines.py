import itertools
from collections import Counter

import numpy as np
import pytest

from fogweaver.bus import FULLY_SCHEMAS, NO_MATING, Bus, Message
from fogweaver.config import EngineConfig
from fogweaver.engines import (
    ChildrenBudget,
    PeerWorker,
    mating_messages,
    run_fully_distributed,
    run_neighbor_aware,
    run_scenario,
    run_semi_distributed,
    run_traditional,
)
from fogweaver.errors import ProtocolError
from fogweaver.fapp import chromosome_from_str, evaluate, is_feasible
from fogweaver.moo_core import dominates
from fogweaver.topology import Worker, WorkerOverlay

from conftest import overlay_on

DISTRIBUTED = ["semi", "fully", "neighbor"]


def assert_front_valid(result, problem):
    points = [p.point for p in result.final_front]
    for a, b in itertools.permutations(points, 2):
        assert not dominates(a, b)
    for p in result.final_front:
        x = chromosome_from_str(p.chromosome, problem.shape)
        assert is_feasible(problem, x)
        assert evaluate(problem, x).as_tuple() == pytest.approx(p.point)


def hop_rows(result):
    return [m.log_row() for m in result.hop_log]


def test_budget_claims_and_snapshots():
    taken = []
    budget = ChildrenBudget(8, 4, lambda: taken.append(True))
    indices = [budget.claim() for _ in range(5)]
    assert indices == [0, 1, 2, 3, None]
    assert budget.exhausted and not budget.finished.is_set()
    for _ in range(4):
        budget.complete()
    assert len(taken) == 2
    assert budget.finished.is_set()
    assert budget.children == 8


def test_empty_budget_is_finished_at_once():
    assert ChildrenBudget(0, 4, lambda: None).finished.is_set()


@pytest.mark.parametrize("scenario", ["traditional", *DISTRIBUTED])
def test_every_design_runs_the_budget(scenario, engine_cfg, small_instance):
    problem, overlay = small_instance
    cfg = engine_cfg(scenario)
    result = run_scenario(cfg, problem, overlay)
    assert result.scenario == scenario
    assert result.mating_count == cfg.children_budget // 2
    assert result.children_created == cfg.children_budget
    assert len(result.snapshots) == cfg.generation_count
    assert_front_valid(result, problem)
    assert all(value is not False for value in result.audits.values())


def test_traditional_has_no_messages(engine_cfg, small_instance):
    problem, _ = small_instance
    result = run_traditional(engine_cfg("traditional"), problem)
    assert result.hop_log == []
    assert result.mean_hops_per_mating == 0.0


def test_traditional_without_generations_returns_initial_front(engine_cfg, small_instance):
    problem, _ = small_instance
    result = run_traditional(engine_cfg("traditional", generation_count=0), problem)
    assert result.snapshots == []
    assert result.final_front


def weakly_covered(point, front):
    return any(q == point or dominates(q, point) for q in front)


def test_traditional_snapshots_never_lose_ground(engine_cfg, small_instance):
    problem, _ = small_instance
    cfg = engine_cfg("traditional", generation_count=8)
    result = run_traditional(cfg, problem)
    for before, after in zip(result.snapshots, result.snapshots[1:]):
        # a full front 1 may have been truncated by crowding
        if len(after) < cfg.population_size:
            assert all(weakly_covered(p, after) for p in before)


def test_semi_message_law(engine_cfg, small_instance):
    problem, overlay = small_instance
    result = run_semi_distributed(engine_cfg("semi"), problem, overlay)
    per_mating = mating_messages(result.hop_log)
    assert len(per_mating) == result.mating_count
    for kinds in per_mating.values():
        counts = Counter(kinds)
        assert counts["sendSolution"] == counts["solution"] == counts["newChildren"] == 1
        # two solutions leave the global population, owned by one or two workers
        assert 1 <= counts["removeSolutions"] <= 2
    assert result.audits["conservation"]


def test_semi_init_traffic_is_not_attributed_to_matings(engine_cfg, small_instance):
    problem, overlay = small_instance
    result = run_semi_distributed(engine_cfg("semi"), problem, overlay)
    init = [m.topic.split("/")[-1] for m in result.hop_log if m.mating_index == NO_MATING]
    k = len(overlay.workers)
    assert Counter(init) == {"join": k, "solutionTemplate": k, "newPopulation": k, "stopOptimization": k}


@pytest.mark.parametrize("run", [run_fully_distributed, run_neighbor_aware])
def test_peer_designs_send_two_messages_per_mating(run, engine_cfg, small_instance):
    problem, overlay = small_instance
    scenario = "fully" if run is run_fully_distributed else "neighbor"
    result = run(engine_cfg(scenario), problem, overlay)
    per_mating = mating_messages(result.hop_log)
    assert len(per_mating) == result.mating_count
    assert all(sorted(kinds) == ["sendSolution", "solution"] for kinds in per_mating.values())


def test_neighbor_exchanges_stay_within_neighborhoods(engine_cfg, small_instance):
    problem, overlay = small_instance
    result = run_neighbor_aware(engine_cfg("neighbor"), problem, overlay)
    hosts = {w.host_device_id: w.worker_id for w in overlay.workers}
    for m in result.hop_log:
        if m.topic.endswith("sendSolution"):
            requester, target = hosts[m.src_device], hosts[m.dst_device]
            assert target in overlay.neighbor_sets[requester]


@pytest.mark.parametrize("scenario", ["traditional", *DISTRIBUTED])
def test_deterministic_mode_reproduces(scenario, engine_cfg, small_instance):
    problem, overlay = small_instance
    a = run_scenario(engine_cfg(scenario), problem, overlay)
    b = run_scenario(engine_cfg(scenario), problem, overlay)
    assert a.final_front == b.final_front
    assert a.snapshots == b.snapshots
    assert hop_rows(a) == hop_rows(b)


def test_repetitions_use_different_streams(engine_cfg, small_instance):
    problem, overlay = small_instance
    a = run_semi_distributed(engine_cfg("semi", 0), problem, overlay)
    b = run_semi_distributed(engine_cfg("semi", 1), problem, overlay)
    assert hop_rows(a) != hop_rows(b)


def test_neighbor_equals_fully_when_all_workers_adjacent(line_graph, line_problem):
    workers = [Worker(i, h) for i, h in enumerate([1, 2, 3])]
    overlay = WorkerOverlay(workers, {0: frozenset({1, 2}), 1: frozenset({0, 2}), 2: frozenset({0, 1})})
    cfg = EngineConfig(scenario="fully", population_size=6, generation_count=4, worker_count=3, seed=17)
    fully = run_fully_distributed(cfg, line_problem, overlay)
    neighbor = run_neighbor_aware(cfg.model_copy(update={"scenario": "neighbor"}), line_problem, overlay)
    assert fully.final_front == neighbor.final_front
    assert hop_rows(fully) == hop_rows(neighbor)


def test_single_worker_mates_with_itself(line_problem, line_graph):
    overlay = overlay_on(line_graph, [2])
    cfg = EngineConfig(scenario="fully", population_size=4, generation_count=2, worker_count=1, seed=3)
    result = run_fully_distributed(cfg, line_problem, overlay)
    assert result.mating_count == 4
    assert result.mating_hops == 0


def test_semi_with_budget_for_one_mating(line_problem, line_graph):
    overlay = overlay_on(line_graph, [0, 4])
    cfg = EngineConfig(scenario="semi", population_size=2, generation_count=1, worker_count=2, seed=5)
    result = run_semi_distributed(cfg, line_problem, overlay)
    assert result.mating_count == 1
    assert len(mating_messages(result.hop_log)) == 1
    assert len(result.snapshots) == 1
    assert result.audits["conservation"]


def test_zero_generations_stop_right_after_initialization(engine_cfg, small_instance):
    problem, overlay = small_instance
    for scenario in DISTRIBUTED:
        result = run_scenario(engine_cfg(scenario, generation_count=0), problem, overlay)
        assert result.mating_count == 0
        assert result.snapshots == []
        assert all(m.mating_index == NO_MATING for m in result.hop_log)


@pytest.mark.parametrize("scenario", DISTRIBUTED)
def test_concurrent_mode_keeps_invariants(scenario, engine_cfg, small_instance):
    problem, overlay = small_instance
    cfg = engine_cfg(scenario, mode="concurrent")
    result = run_scenario(cfg, problem, overlay)
    assert result.mating_count == cfg.children_budget // 2
    assert result.audits["messageLaw"]
    assert result.audits["exchangedFeasible"]
    assert len(result.snapshots) == cfg.generation_count
    assert_front_valid(result, problem)
    if scenario == "semi":
        assert result.audits["conservation"]


def test_unexpected_solution_is_a_protocol_error(line_problem, line_graph):
    bus = Bus(line_graph, FULLY_SCHEMAS)
    cfg = EngineConfig(scenario="fully", population_size=4, generation_count=1, worker_count=2)
    budget = ChildrenBudget(cfg.children_budget, cfg.population_size, lambda: None)
    bus.register("worker-0", 0, lambda m: worker.handle(m))
    worker = PeerWorker(bus, 0, cfg, np.random.default_rng(0), [1], budget, self_driven=False)
    stray = Message(1, "solution/0", {"chromosome": "0" * 10}, "worker-1", "worker-0", 4, 0, 4, 0)
    with pytest.raises(ProtocolError) as err:
        worker.handle(stray)
    assert "solution/0" in str(err.value)
