import numpy as np
import pytest

from fogweaver.config import EngineConfig, ExperimentConfig
from fogweaver.fapp import ProblemInstance, build_problem
from fogweaver.topology import Device, Link, Worker, WorkerOverlay, build_graph, compute_neighbors, generate_topology, place_workers


def make_graph(edges, n_fog, gateways=(), resources=None, attach=0, latency=2.0, cloud_latency=100.0):
    resources = resources or [2] * n_fog
    devices = [Device(i, resources[i], i in gateways) for i in range(n_fog)]
    links = [Link(a, b, latency) for a, b in edges]
    links.append(Link(attach, n_fog, cloud_latency))
    return build_graph(devices, links, n_fog)


@pytest.fixture
def path_graph():
    """a(0) - b(1) - c(2), cloud 3 behind b."""
    return make_graph([(0, 1), (1, 2)], 3, gateways=(0, 2), attach=1)


@pytest.fixture
def line_graph():
    """0 - 1 - 2 - 3 - 4, 2 ms links, one resource unit each, cloud 5 behind 2."""
    return make_graph(
        [(0, 1), (1, 2), (2, 3), (3, 4)], 5, gateways=(0, 4), resources=[1] * 5, attach=2
    )


@pytest.fixture
def line_problem(line_graph):
    """App 0 requested at both gateways, app 1 only at gateway 0."""
    return ProblemInstance(
        graph=line_graph,
        app_consumption=np.array([1, 1]),
        request_matrix=np.array([[1, 1], [1, 0]], dtype=np.uint8),
        gateways=[0, 4],
    )


@pytest.fixture
def small_experiment():
    return ExperimentConfig.model_validate(
        {
            "topology": {"deviceCount": 30, "workerCount": 4, "neighborhoodRadius": 1},
            "problem": {"appCount": 4},
            "engine": {"populationSize": 16, "generationCount": 3, "workerCount": 4, "neighborhoodRadius": 1},
            "repetitions": 2,
            "seedBase": 7,
        }
    )


@pytest.fixture
def small_instance(small_experiment):
    cfg = small_experiment
    graph = generate_topology(cfg.topology, cfg.topology_seed)
    problem = build_problem(graph, cfg.problem, cfg.problem_seed)
    overlay = place_workers(graph, cfg.topology.worker_count, cfg.topology.neighborhood_radius)
    return problem, overlay


@pytest.fixture
def engine_cfg(small_experiment):
    def make(scenario, rep=0, **update) -> EngineConfig:
        cfg = small_experiment.engine_for(scenario, rep)
        return cfg.model_copy(update=update) if update else cfg

    return make


def overlay_on(graph, hosts, radius=1) -> WorkerOverlay:
    workers = [Worker(i, h) for i, h in enumerate(hosts)]
    return WorkerOverlay(workers, compute_neighbors(workers, graph, radius))
