"""
Fog application placement benchmark: request matrix generation, binary
placement chromosomes, constraint checks, repair and the two objectives
(mean number of instances, mean user-to-instance latency).
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .config import ProblemConfig
from .errors import ConstraintViolation, ProblemError, UnsatisfiableInstanceError
from .topology import InfrastructureGraph, graph_from_dict, graph_to_dict

logger = logging.getLogger(__name__)

# apps x fog devices, 0/1 entries
Placement = np.ndarray

MAX_CONSUMPTION_DRAWS = 100


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    graph: InfrastructureGraph
    app_consumption: np.ndarray
    request_matrix: np.ndarray
    gateways: List[int]
    popularity_range: Tuple[float, float] = (0.0, 0.75)
    user_inter_request_time: Tuple[int, int] = (5, 10)
    gateway_latency: np.ndarray = field(init=False, repr=False)
    capacity: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        fog = np.arange(self.graph.fog_count)
        object.__setattr__(self, "gateway_latency", self.graph.latency_table[np.ix_(self.gateways, fog)])
        object.__setattr__(self, "capacity", self.graph.resources)

    @property
    def app_count(self) -> int:
        return len(self.app_consumption)

    @property
    def device_count(self) -> int:
        return self.graph.fog_count

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.app_count, self.device_count)


@dataclass(frozen=True)
class ObjectiveVector:
    mean_instances: float
    mean_distance: float

    def as_tuple(self) -> Tuple[float, float]:
        return (self.mean_instances, self.mean_distance)


@dataclass(frozen=True)
class FeasibilityReport:
    missing_apps: List[int]
    overloaded_devices: List[int]

    @property
    def feasible(self) -> bool:
        return not self.missing_apps and not self.overloaded_devices

    def __bool__(self):
        return self.feasible


def build_problem(graph: InfrastructureGraph, cfg: ProblemConfig, seed: int) -> ProblemInstance:
    """
    Draws which gateways request which applications and how many resource
    units every application consumes. Deterministic in seed.
    """
    gateways = graph.gateways
    if not gateways:
        raise ProblemError("The infrastructure has no gateways to attach users to")
    rng = np.random.default_rng(seed)
    apps, n_gw = cfg.app_count, len(gateways)

    low, high = cfg.popularity_range
    popularity = rng.uniform(low, high, size=(apps, n_gw))
    requests = (rng.random((apps, n_gw)) < popularity).astype(np.uint8)
    for a in np.flatnonzero(requests.sum(axis=1) == 0):
        requests[a, rng.integers(n_gw)] = 1

    c_low, c_high = cfg.app_resource_range
    total = int(graph.resources.sum())
    for _ in range(MAX_CONSUMPTION_DRAWS):
        consumption = rng.integers(c_low, c_high + 1, size=apps)
        if consumption.sum() <= total:
            break
    else:
        raise ProblemError(f"Applications demand more than the {total} resource units available")

    return ProblemInstance(
        graph=graph,
        app_consumption=consumption.astype(np.int64),
        request_matrix=requests,
        gateways=list(gateways),
        popularity_range=tuple(cfg.popularity_range),
        user_inter_request_time=tuple(cfg.user_inter_request_time),
    )


def _check_shape(problem: ProblemInstance, placement: Placement):
    if placement.shape != problem.shape:
        raise ProblemError(f"Placement shape {placement.shape} does not match problem {problem.shape}")


def evaluate(problem: ProblemInstance, placement: Placement) -> ObjectiveVector:
    """
    o1 is the mean number of instances per app; o2 the mean, over apps, of
    the average latency from each requesting gateway to its closest
    instance.
    """
    _check_shape(problem, placement)
    x = placement.astype(bool)
    instances = x.sum(axis=1)
    if (instances == 0).any():
        missing = np.flatnonzero(instances == 0).tolist()
        raise ConstraintViolation(f"Apps without any instance: {missing}", missing)

    distances = np.zeros(problem.app_count)
    for a in range(problem.app_count):
        requesters = problem.request_matrix[a].astype(bool)
        if not requesters.any():
            continue
        closest = problem.gateway_latency[requesters][:, x[a]].min(axis=1)
        distances[a] = closest.mean()
    return ObjectiveVector(float(instances.mean()), float(distances.mean()))


def device_load(problem: ProblemInstance, placement: Placement) -> np.ndarray:
    return problem.app_consumption @ placement.astype(np.int64)


def is_feasible(problem: ProblemInstance, placement: Placement) -> FeasibilityReport:
    _check_shape(problem, placement)
    missing = np.flatnonzero(placement.sum(axis=1) == 0).tolist()
    overloaded = np.flatnonzero(device_load(problem, placement) > problem.capacity).tolist()
    return FeasibilityReport(missing, overloaded)


def _spare_device(x, load, capacity, demand, app, rng, exclude=None) -> Optional[int]:
    fits = (load + demand <= capacity) & (x[app] == 0)
    if exclude is not None:
        fits[exclude] = False
    candidates = np.flatnonzero(fits)
    if len(candidates) == 0:
        return None
    return int(rng.choice(candidates))


def repair(problem: ProblemInstance, placement: Placement, rng: np.random.Generator) -> Placement:
    """
    Makes a placement feasible. Overloaded devices shed the instances of
    their most replicated apps; an app's last replica migrates instead.
    Apps left without instances are then placed on a random device with
    spare capacity. Feasible input comes back unchanged.
    """
    _check_shape(problem, placement)
    x = np.array(placement, dtype=np.uint8, copy=True)
    if is_feasible(problem, x):
        return x

    demand, capacity = problem.app_consumption, problem.capacity
    load = device_load(problem, x)
    limit = problem.app_count * problem.device_count
    migrations = 0

    for i in range(problem.device_count):
        while load[i] > capacity[i]:
            hosted = np.flatnonzero(x[:, i])
            replicas = x[hosted].sum(axis=1)
            most = hosted[replicas == replicas.max()]
            a = int(most[0]) if len(most) == 1 else int(rng.choice(most))
            x[a, i] = 0
            load[i] -= demand[a]
            if replicas.max() > 1:
                continue
            migrations += 1
            target = _spare_device(x, load, capacity, demand[a], a, rng, exclude=i)
            if target is None or migrations > limit:
                raise UnsatisfiableInstanceError(
                    f"No device can take the last replica of app {a} after {migrations} migrations"
                )
            x[a, target] = 1
            load[target] += demand[a]
            logger.debug("Repair migrated app %d from device %d to %d", a, i, target)

    for a in np.flatnonzero(x.sum(axis=1) == 0):
        target = _spare_device(x, load, capacity, demand[a], a, rng)
        if target is None:
            raise UnsatisfiableInstanceError(f"No device has spare capacity for app {a}")
        x[a, target] = 1
        load[target] += demand[a]
    return x


def random_placement(problem: ProblemInstance, rng: np.random.Generator) -> Placement:
    """Sparse Bernoulli(1/|I|) matrix, repaired into a feasible placement."""
    x = (rng.random(problem.shape) < 1.0 / problem.device_count).astype(np.uint8)
    return repair(problem, x, rng)


def chromosome_to_str(placement: Placement) -> str:
    """Row-major 0/1 string, the wire form of a chromosome."""
    return (placement.astype(np.uint8).ravel() + ord("0")).tobytes().decode("ascii")


def chromosome_from_str(text: str, shape: Tuple[int, int]) -> Placement:
    raw = np.frombuffer(text.encode("ascii"), dtype=np.uint8) - ord("0")
    if raw.size != shape[0] * shape[1] or (raw > 1).any():
        raise ProblemError(f"Chromosome string does not encode a {shape[0]}x{shape[1]} binary matrix")
    return raw.reshape(shape).copy()


def problem_to_dict(problem: ProblemInstance, topology_path=None, topology_seed=None) -> dict:
    return {
        "appConsumption": problem.app_consumption.tolist(),
        "requestMatrix": problem.request_matrix.tolist(),
        "gateways": list(problem.gateways),
        "popularityRange": list(problem.popularity_range),
        "userInterRequestTime": list(problem.user_inter_request_time),
        "topology": {
            "path": str(topology_path) if topology_path is not None else None,
            "seed": topology_seed,
        },
    }


def problem_from_dict(data: dict, graph: InfrastructureGraph) -> ProblemInstance:
    try:
        problem = ProblemInstance(
            graph=graph,
            app_consumption=np.array(data["appConsumption"], dtype=np.int64),
            request_matrix=np.array(data["requestMatrix"], dtype=np.uint8),
            gateways=[int(g) for g in data["gateways"]],
            popularity_range=tuple(data.get("popularityRange", (0.0, 0.75))),
            user_inter_request_time=tuple(data.get("userInterRequestTime", (5, 10))),
        )
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise ProblemError(f"Malformed problem document: {e}") from e
    if problem.request_matrix.shape != (problem.app_count, len(problem.gateways)):
        raise ProblemError("requestMatrix must be |A| x |G|")
    return problem


def infrastructure_payload(problem: ProblemInstance) -> dict:
    """The infrastructure data a worker needs to evaluate placements on its own."""
    return {"graph": graph_to_dict(problem.graph), "problem": problem_to_dict(problem)}


def problem_from_infrastructure(data: dict) -> ProblemInstance:
    return problem_from_dict(data["problem"], graph_from_dict(data["graph"]))


def save_problem(problem: ProblemInstance, path, topology_path=None, topology_seed=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f_out:
        json.dump(problem_to_dict(problem, topology_path, topology_seed), f_out, indent=2, sort_keys=True)
        f_out.write("\n")
    return path


def load_problem(path, graph: InfrastructureGraph) -> ProblemInstance:
    with Path(path).open("r", encoding="utf-8") as f_in:
        return problem_from_dict(json.load(f_in), graph)
