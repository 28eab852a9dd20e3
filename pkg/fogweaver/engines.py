"""
The four execution designs of NSGA-II over the fog placement problem:

  traditional  one node, generational, no messages
  semi         cloud coordinator keeps the objective space, workers keep
               chromosomes and do the mating
  fully        workers only; the remote parent comes from any other worker
  neighbor     as fully, but the remote parent comes from a worker within
               the neighborhood radius

Coordinator, context provider and workers are actors that only talk
through the bus. In deterministic mode one FIFO event loop drives them; in
concurrent mode every actor runs on its own thread.
"""

import logging
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .bus import FULLY_SCHEMAS, NO_MATING, SEMI_SCHEMAS, Bus, Message
from .config import EngineConfig
from .errors import ConfigError, ProtocolError
from .fapp import (
    ObjectiveVector,
    ProblemInstance,
    chromosome_from_str,
    chromosome_to_str,
    evaluate,
    infrastructure_payload,
    is_feasible,
    problem_from_infrastructure,
    random_placement,
)
from .moo_core import (
    Individual,
    Point,
    RankedPopulation,
    binary_tournament,
    make_children,
    non_dominated,
    rank_population,
    steady_state_insert,
)
from .topology import WorkerOverlay

logger = logging.getLogger(__name__)

COORDINATOR = "coordinator"
CONTEXT_PROVIDER = "context-provider"
GRACE_CACHE_SIZE = 4
TRACE_LENGTH = 12
POLL_SECONDS = 0.05


@dataclass(frozen=True)
class FrontPoint:
    o1: float
    o2: float
    chromosome: Optional[str] = None

    @property
    def point(self) -> Point:
        return (self.o1, self.o2)


@dataclass
class RunResult:
    scenario: str
    seed: int
    final_front: List[FrontPoint]
    snapshots: List[List[Point]]
    hop_log: List[Message]
    mating_count: int
    children_created: int
    wall_clock: float = 0.0
    audits: Dict[str, object] = field(default_factory=dict)

    @property
    def message_count(self) -> int:
        return len(self.hop_log)

    @property
    def total_hops(self) -> int:
        return sum(m.hop_cost for m in self.hop_log)

    @property
    def mating_hops(self) -> int:
        return sum(m.hop_cost for m in self.hop_log if m.mating_index != NO_MATING)

    @property
    def mean_hops_per_mating(self) -> float:
        return self.mating_hops / self.mating_count if self.mating_count else 0.0

    def counters(self) -> dict:
        return {
            "messageCount": self.message_count,
            "matingCount": self.mating_count,
            "childrenCreated": self.children_created,
            "totalHops": self.total_hops,
            "matingHops": self.mating_hops,
            "meanHopsPerMating": self.mean_hops_per_mating,
        }


def worker_client(worker_id: int) -> str:
    return f"worker-{worker_id}"


def solution_id(owner: int, counter: int) -> int:
    # owner in the high word keeps ids globally unique without coordination
    return ((owner + 1) << 32) | counter


def _fitness(objectives: ObjectiveVector) -> List[float]:
    return [objectives.mean_instances, objectives.mean_distance]


def _front_points(members) -> List[Point]:
    return sorted(m.point for m in members)


class ChildrenBudget:
    """
    Claimed and completed matings against the children budget
    B = populationSize x generationCount; each mating yields two children.
    """

    def __init__(self, total_children: int, snapshot_every: int, on_snapshot: Callable[[], None]):
        self.total = total_children
        self.snapshot_every = snapshot_every
        self.on_snapshot = on_snapshot
        self.claimed = 0
        self.completed = 0
        self.finished = threading.Event()
        self._lock = threading.Lock()
        if self.total < 2:
            self.finished.set()

    def claim(self) -> Optional[int]:
        """Index of a new mating, or None once the budget is spent."""
        with self._lock:
            if 2 * (self.claimed + 1) > self.total:
                return None
            self.claimed += 1
            return self.claimed - 1

    @property
    def exhausted(self) -> bool:
        return 2 * (self.claimed + 1) > self.total

    @property
    def children(self) -> int:
        return 2 * self.completed

    def complete(self):
        with self._lock:
            self.completed += 1
            children = 2 * self.completed
            if children % self.snapshot_every == 0:
                self.on_snapshot()
            if self.exhausted and self.completed == self.claimed:
                self.finished.set()


class _Actor:
    def __init__(self, client_id: str, bus: Bus):
        self.client_id = client_id
        self.bus = bus
        self.trace = deque(maxlen=TRACE_LENGTH)

    def handle(self, message: Message):
        self.trace.append(f"#{message.seq_no} {message.topic} from {message.src_client}")
        self.dispatch(message)

    def dispatch(self, message: Message):
        raise NotImplementedError

    def violation(self, message: Message, reason: str):
        raise ProtocolError(f"{self.client_id}: {reason} ({message.topic})", self.trace)


# --- Semi-distributed ---------------------------------------------------


class SemiCoordinator(_Actor):
    """Cloud actor holding the global objective space (ids, objectives, owners)."""

    def __init__(self, bus: Bus, cfg: EngineConfig, problem: ProblemInstance, worker_ids, rng, budget):
        super().__init__(COORDINATOR, bus)
        self.cfg = cfg
        self.problem = problem
        self.worker_ids = list(worker_ids)
        self.rng = rng
        self.budget = budget
        self.joined = set()
        self.initial = {}
        self.global_pop: Optional[RankedPopulation] = None
        self.stopped = False
        bus.subscribe(self.client_id, "command/join")
        bus.subscribe(self.client_id, "fitness/+/newPopulation")
        bus.subscribe(self.client_id, "fitness/+/newChildren")

    def dispatch(self, message: Message):
        levels = message.topic.split("/")
        if message.topic == "command/join":
            self.on_join(message)
        elif levels[0] == "fitness" and levels[2] == "newPopulation":
            self.on_new_population(message)
        elif levels[0] == "fitness" and levels[2] == "newChildren":
            self.on_new_children(message)
        else:
            self.violation(message, "unexpected topic")

    def on_join(self, message: Message):
        w = int(message.payload["workerId"])
        if w not in self.worker_ids or w in self.joined:
            self.violation(message, f"unexpected join from worker {w}")
        self.joined.add(w)
        self.bus.publish(
            self.client_id,
            f"command/{w}/solutionTemplate",
            {
                "subPopulationSize": self.cfg.sub_population,
                "chromosomeShape": list(self.problem.shape),
                "infrastructure": infrastructure_payload(self.problem),
            },
        )

    def on_new_population(self, message: Message):
        if self.global_pop is not None:
            self.violation(message, "initial population after initialization finished")
        w = int(message.payload["workerId"])
        self.initial[w] = [
            Individual(int(sid), ObjectiveVector(*f), owner_worker_id=w)
            for sid, f in zip(message.payload["solutionIds"], message.payload["fitness"])
        ]
        if len(self.initial) < len(self.worker_ids):
            return
        members = [ind for w in sorted(self.initial) for ind in self.initial[w]]
        self.global_pop = rank_population(members)
        for w in self.worker_ids:
            self.schedule(w)

    def on_new_children(self, message: Message):
        if self.global_pop is None or self.stopped:
            self.violation(message, "children outside the optimization loop")
        w = int(message.payload["workerId"])
        children = [
            Individual(int(sid), ObjectiveVector(*f), owner_worker_id=w)
            for sid, f in zip(message.payload["solutionIds"], message.payload["fitness"])
        ]
        owners = {m.solution_id: m.owner_worker_id for m in self.global_pop.members}
        owners.update({c.solution_id: w for c in children})
        self.global_pop, removed = steady_state_insert(self.global_pop, children, self.cfg.population_size)

        by_owner: Dict[int, List[int]] = {}
        for sid in removed:
            by_owner.setdefault(owners[sid], []).append(sid)
        for owner in sorted(by_owner):
            self.bus.publish(
                self.client_id,
                f"command/{owner}/removeSolutions",
                {"ids": sorted(by_owner[owner])},
                mating_index=message.mating_index,
            )
        self.budget.complete()
        self.schedule(w)

    def schedule(self, w: int):
        """Starts the next mating for the idle worker w, or stops when the budget is spent."""
        index = self.budget.claim()
        if index is None:
            if self.budget.finished.is_set() and not self.stopped:
                self.stop()
            return
        parent = self.global_pop.get(binary_tournament(self.global_pop, self.rng))
        self.bus.publish(
            self.client_id,
            f"command/{parent.owner_worker_id}/sendSolution",
            {"solutionId": parent.solution_id, "target": w},
            mating_index=index,
        )

    def stop(self):
        self.stopped = True
        self.bus.publish(self.client_id, "command/stopOptimization", {})


class SemiWorker(_Actor):
    """Fog actor storing chromosomes of its solutions and performing matings."""

    def __init__(self, bus: Bus, worker_id: int, cfg: EngineConfig, rng):
        super().__init__(worker_client(worker_id), bus)
        self.worker_id = worker_id
        self.cfg = cfg
        self.rng = rng
        self.problem: Optional[ProblemInstance] = None
        self.store: Dict[int, Individual] = {}
        self.grace = deque(maxlen=GRACE_CACHE_SIZE)
        self.counter = 0
        self.stopped = False
        bus.subscribe(self.client_id, f"command/{worker_id}/+")
        bus.subscribe(self.client_id, f"solution/{worker_id}")
        bus.subscribe(self.client_id, "command/stopOptimization")

    def join(self):
        self.bus.publish(self.client_id, "command/join", {"workerId": self.worker_id})

    def dispatch(self, message: Message):
        if self.stopped:
            self.violation(message, "message after stopOptimization")
        levels = message.topic.split("/")
        if message.topic == "command/stopOptimization":
            self.stopped = True
        elif levels[0] == "command" and levels[2] == "solutionTemplate":
            self.on_template(message)
        elif self.problem is None:
            self.violation(message, "message before solutionTemplate")
        elif levels[0] == "command" and levels[2] == "sendSolution":
            self.on_send_solution(message)
        elif levels[0] == "command" and levels[2] == "removeSolutions":
            self.on_remove(message)
        elif levels[0] == "solution":
            self.on_solution(message)
        else:
            self.violation(message, "unexpected topic")

    def _new_individual(self, chromosome, objectives) -> Individual:
        ind = Individual(solution_id(self.worker_id, self.counter), objectives, chromosome, self.worker_id)
        self.counter += 1
        self.store[ind.solution_id] = ind
        return ind

    def on_template(self, message: Message):
        self.problem = problem_from_infrastructure(message.payload["infrastructure"])
        created = []
        for _ in range(int(message.payload["subPopulationSize"])):
            x = random_placement(self.problem, self.rng)
            created.append(self._new_individual(x, evaluate(self.problem, x)))
        self.bus.publish(
            self.client_id,
            f"fitness/{self.worker_id}/newPopulation",
            {
                "workerId": self.worker_id,
                "solutionIds": [c.solution_id for c in created],
                "fitness": [_fitness(c.objectives) for c in created],
            },
        )

    def _local_winner(self) -> Optional[Individual]:
        if not self.store:
            return None
        local = rank_population(self.store.values())
        return self.store[binary_tournament(local, self.rng)]

    def on_send_solution(self, message: Message):
        sid, target = int(message.payload["solutionId"]), int(message.payload["target"])
        if sid in self.store:
            chromosome = self.store[sid].chromosome
        else:
            cached = next((c for i, c in self.grace if i == sid), None)
            if cached is not None:
                logger.info("Worker %d answered solution %d from its grace cache", self.worker_id, sid)
                chromosome = cached
            else:
                winner = self._local_winner()
                if winner is None:
                    self.violation(message, f"solution {sid} unknown and no local solution to offer")
                logger.warning(
                    "Worker %d no longer holds solution %d, sending local winner %d",
                    self.worker_id, sid, winner.solution_id,
                )
                chromosome = winner.chromosome
        self.bus.publish(
            self.client_id,
            f"solution/{target}",
            {"chromosome": chromosome_to_str(chromosome)},
            mating_index=message.mating_index,
        )

    def on_remove(self, message: Message):
        for sid in message.payload["ids"]:
            ind = self.store.pop(int(sid), None)
            if ind is None:
                self.violation(message, f"removal of unknown solution {sid}")
            self.grace.append((ind.solution_id, ind.chromosome))

    def on_solution(self, message: Message):
        parent1 = chromosome_from_str(message.payload["chromosome"], self.problem.shape)
        local = self._local_winner()
        parent2 = local.chromosome if local is not None else parent1
        children = [
            self._new_individual(x, objectives)
            for x, objectives in make_children(
                self.problem, parent1, parent2, self.rng, self.cfg.mutation_probability
            )
        ]
        self.bus.publish(
            self.client_id,
            f"fitness/{self.worker_id}/newChildren",
            {
                "workerId": self.worker_id,
                "solutionIds": [c.solution_id for c in children],
                "fitness": [_fitness(c.objectives) for c in children],
            },
            mating_index=message.mating_index,
        )


# --- Fully-distributed and neighbor-aware --------------------------------


class ContextProvider(_Actor):
    """Cloud entity answering joins with the solution template and announcing the stop."""

    def __init__(self, bus: Bus, cfg: EngineConfig, problem: ProblemInstance, worker_ids):
        super().__init__(CONTEXT_PROVIDER, bus)
        self.cfg = cfg
        self.problem = problem
        self.worker_ids = set(worker_ids)
        self.joined = set()
        bus.subscribe(self.client_id, "command/join")

    def dispatch(self, message: Message):
        if message.topic != "command/join":
            self.violation(message, "unexpected topic")
        w = int(message.payload["workerId"])
        if w not in self.worker_ids or w in self.joined:
            self.violation(message, f"unexpected join from worker {w}")
        self.joined.add(w)
        self.bus.publish(
            self.client_id,
            f"command/{w}/solutionTemplate",
            {
                "subPopulationSize": self.cfg.sub_population,
                "chromosomeShape": list(self.problem.shape),
                "infrastructure": infrastructure_payload(self.problem),
            },
        )

    def stop(self):
        self.bus.publish(self.client_id, "command/stopOptimization", {})


class PeerWorker(_Actor):
    """Fog actor holding a sub-population and initiating its own matings."""

    def __init__(self, bus: Bus, worker_id: int, cfg: EngineConfig, rng, candidates: List[int], budget, self_driven: bool):
        super().__init__(worker_client(worker_id), bus)
        self.worker_id = worker_id
        self.cfg = cfg
        self.rng = rng
        # sorted so fully and neighbor draw identically over the same candidates
        self.candidates = sorted(candidates) or [worker_id]
        self.budget = budget
        self.self_driven = self_driven
        self.problem: Optional[ProblemInstance] = None
        self.population: Optional[RankedPopulation] = None
        self.deferred: List[Message] = []
        self.counter = 0
        self.busy = False
        self.stopped = False
        bus.subscribe(self.client_id, f"command/{worker_id}/+")
        bus.subscribe(self.client_id, f"solution/{worker_id}")
        bus.subscribe(self.client_id, "command/stopOptimization")

    def join(self):
        self.bus.publish(self.client_id, "command/join", {"workerId": self.worker_id})

    def dispatch(self, message: Message):
        if self.stopped:
            self.violation(message, "message after stopOptimization")
        levels = message.topic.split("/")
        if message.topic == "command/stopOptimization":
            self.stopped = True
        elif levels[0] == "command" and levels[2] == "solutionTemplate":
            self.on_template(message)
        elif levels[0] == "command" and levels[2] == "sendSolution":
            if self.population is None:
                # a faster peer may ask before our template arrives
                self.deferred.append(message)
            else:
                self.on_send_solution(message)
        elif levels[0] == "solution":
            if not self.busy:
                self.violation(message, "solution without a pending mating")
            self.on_solution(message)
        else:
            self.violation(message, "unexpected topic")

    def _new_individual(self, chromosome, objectives) -> Individual:
        ind = Individual(solution_id(self.worker_id, self.counter), objectives, chromosome, self.worker_id)
        self.counter += 1
        return ind

    def on_template(self, message: Message):
        self.problem = problem_from_infrastructure(message.payload["infrastructure"])
        members = []
        for _ in range(int(message.payload["subPopulationSize"])):
            x = random_placement(self.problem, self.rng)
            members.append(self._new_individual(x, evaluate(self.problem, x)))
        self.population = rank_population(members)
        for pending in self.deferred:
            self.on_send_solution(pending)
        self.deferred.clear()
        if self.self_driven:
            self.initiate()

    def initiate(self) -> bool:
        """Requests a remote parent for a new mating. False once the budget is spent."""
        if self.busy or self.stopped or self.population is None:
            return False
        index = self.budget.claim()
        if index is None:
            return False
        m = self.candidates[int(self.rng.integers(len(self.candidates)))]
        self.busy = True
        self.bus.publish(
            self.client_id,
            f"command/{m}/sendSolution",
            {"requester": self.worker_id},
            mating_index=index,
        )
        return True

    def on_send_solution(self, message: Message):
        chosen = self.population.get(binary_tournament(self.population, self.rng))
        self.bus.publish(
            self.client_id,
            f"solution/{int(message.payload['requester'])}",
            {"chromosome": chromosome_to_str(chosen.chromosome)},
            mating_index=message.mating_index,
        )

    def on_solution(self, message: Message):
        remote = chromosome_from_str(message.payload["chromosome"], self.problem.shape)
        local = self.population.get(binary_tournament(self.population, self.rng)).chromosome
        children = [
            self._new_individual(x, objectives)
            for x, objectives in make_children(self.problem, remote, local, self.rng, self.cfg.mutation_probability)
        ]
        self.population, _ = steady_state_insert(self.population, children, self.cfg.sub_population)
        self.busy = False
        self.budget.complete()
        if self.self_driven:
            self.initiate()


# --- Runners -------------------------------------------------------------


def _check_workers(cfg: EngineConfig, overlay: WorkerOverlay):
    if len(overlay.workers) != cfg.worker_count:
        raise ConfigError(f"Overlay has {len(overlay.workers)} workers, config expects {cfg.worker_count}")


def _streams(seed: int, count: int) -> List[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def _drive_concurrent(bus: Bus, ready: Callable[[], bool], starters: List[Callable[[], None]], finish: Callable[[], None]):
    """Starts the client threads, waits until `ready()` or a client fails, then finishes and joins."""
    bus.start()
    for start in starters:
        start()
    while not ready():
        if bus.errors:
            break
        time.sleep(POLL_SECONDS)
    if not bus.errors:
        finish()
    bus.shutdown()
    bus.join()


def run_traditional(cfg: EngineConfig, problem: ProblemInstance, overlay: Optional[WorkerOverlay] = None) -> RunResult:
    """Generational NSGA-II on a single node: union of parents and offspring, sort, truncate."""
    started = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    counter = iter(range(1 << 32))

    def individual(x, objectives=None):
        return Individual(solution_id(0, next(counter)), objectives or evaluate(problem, x), x)

    pop = rank_population(individual(random_placement(problem, rng)) for _ in range(cfg.population_size))
    snapshots = []
    matings = 0
    for _ in range(cfg.generation_count):
        by_id = {m.solution_id: m for m in pop.members}
        offspring = []
        for _ in range(cfg.population_size // 2):
            father1 = by_id[binary_tournament(pop, rng)]
            father2 = by_id[binary_tournament(pop, rng)]
            for x, objectives in make_children(
                problem, father1.chromosome, father2.chromosome, rng, cfg.mutation_probability
            ):
                offspring.append(individual(x, objectives))
            matings += 1
        pop, _ = steady_state_insert(pop, offspring, cfg.population_size)
        snapshots.append(_front_points(pop.first_front()))

    front = sorted(pop.first_front(), key=lambda m: (m.point, m.solution_id))
    result = RunResult(
        scenario="traditional",
        seed=cfg.seed,
        final_front=[FrontPoint(*m.point, chromosome_to_str(m.chromosome)) for m in front],
        snapshots=snapshots,
        hop_log=[],
        mating_count=matings,
        children_created=2 * matings,
        wall_clock=time.perf_counter() - started,
    )
    result.audits = audit_run(result, problem)
    return result


def run_semi_distributed(cfg: EngineConfig, problem: ProblemInstance, overlay: WorkerOverlay) -> RunResult:
    """Coordinator on the cloud keeps the objective space; workers keep chromosomes and mate."""
    _check_workers(cfg, overlay)
    started = time.perf_counter()
    graph = problem.graph
    bus = Bus(graph, SEMI_SCHEMAS, cfg.mode)
    streams = _streams(cfg.seed, cfg.worker_count + 1)
    snapshots: List[List[Point]] = []
    coordinator: Optional[SemiCoordinator] = None

    def snapshot():
        snapshots.append(_front_points(coordinator.global_pop.first_front()))

    budget = ChildrenBudget(cfg.children_budget, cfg.population_size, snapshot)
    bus.register(COORDINATOR, graph.cloud_device_id, lambda m: coordinator.handle(m))
    coordinator = SemiCoordinator(bus, cfg, problem, overlay.worker_ids, streams[0], budget)
    workers = {}
    for w in overlay.workers:
        bus.register(worker_client(w.worker_id), w.host_device_id, lambda m, wid=w.worker_id: workers[wid].handle(m))
        workers[w.worker_id] = SemiWorker(bus, w.worker_id, cfg, streams[w.worker_id + 1])

    if cfg.mode == "deterministic":
        for wid in sorted(workers):
            workers[wid].join()
        bus.run_until_idle()
    else:
        # the coordinator publishes the stop itself once the budget is spent
        _drive_concurrent(
            bus,
            lambda: budget.finished.is_set() and coordinator.stopped,
            [workers[wid].join for wid in sorted(workers)],
            lambda: None,
        )

    if not coordinator.stopped:
        raise ProtocolError("Semi-distributed run ended without stopOptimization", coordinator.trace)

    front = sorted(coordinator.global_pop.first_front(), key=lambda m: (m.point, m.solution_id))
    final = [
        FrontPoint(*m.point, chromosome_to_str(workers[m.owner_worker_id].store[m.solution_id].chromosome))
        for m in front
    ]
    result = RunResult(
        scenario="semi",
        seed=cfg.seed,
        final_front=final,
        snapshots=snapshots,
        hop_log=list(bus.log),
        mating_count=budget.completed,
        children_created=budget.children,
        wall_clock=time.perf_counter() - started,
    )
    stored = set()
    for worker in workers.values():
        stored.update(worker.store)
    result.audits = audit_run(result, problem)
    result.audits["conservation"] = stored == set(coordinator.global_pop.ids)
    return result


def _run_peer_design(cfg: EngineConfig, problem: ProblemInstance, overlay: WorkerOverlay, neighbor_aware: bool) -> RunResult:
    _check_workers(cfg, overlay)
    started = time.perf_counter()
    graph = problem.graph
    bus = Bus(graph, FULLY_SCHEMAS, cfg.mode)
    streams = _streams(cfg.seed, cfg.worker_count)
    snapshots: List[List[Point]] = []
    workers: Dict[int, PeerWorker] = {}

    def union_front():
        populations = [w.population for w in list(workers.values()) if w.population is not None]
        return non_dominated(m.point for pop in populations for m in pop.members)

    def snapshot():
        snapshots.append(sorted(union_front()))

    budget = ChildrenBudget(cfg.children_budget, cfg.population_size, snapshot)
    bus.register(CONTEXT_PROVIDER, graph.cloud_device_id, lambda m: provider.handle(m))
    provider = ContextProvider(bus, cfg, problem, overlay.worker_ids)
    concurrent = cfg.mode == "concurrent"
    all_ids = overlay.worker_ids
    for w in overlay.workers:
        if neighbor_aware:
            candidates = list(overlay.neighbor_sets[w.worker_id])
        else:
            candidates = [o for o in all_ids if o != w.worker_id]
        bus.register(worker_client(w.worker_id), w.host_device_id, lambda m, wid=w.worker_id: workers[wid].handle(m))
        workers[w.worker_id] = PeerWorker(bus, w.worker_id, cfg, streams[w.worker_id], candidates, budget, concurrent)

    if not concurrent:
        for wid in sorted(workers):
            workers[wid].join()
        bus.run_until_idle()
        # round-robin initiations by worker id, then drain
        while not budget.exhausted:
            for wid in sorted(workers):
                workers[wid].initiate()
            bus.run_until_idle()
        provider.stop()
        bus.run_until_idle()
    else:
        # stop only after every worker got its template, or a late template would follow the stop
        _drive_concurrent(
            bus,
            lambda: budget.finished.is_set() and all(w.population is not None for w in workers.values()),
            [workers[wid].join for wid in sorted(workers)],
            provider.stop,
        )

    members = [m for wid in sorted(workers) for m in workers[wid].population.members]
    front_points = set(union_front())
    front = sorted((m for m in members if m.point in front_points), key=lambda m: (m.point, m.solution_id))
    result = RunResult(
        scenario="neighbor" if neighbor_aware else "fully",
        seed=cfg.seed,
        final_front=[FrontPoint(*m.point, chromosome_to_str(m.chromosome)) for m in front],
        snapshots=snapshots,
        hop_log=list(bus.log),
        mating_count=budget.completed,
        children_created=budget.children,
        wall_clock=time.perf_counter() - started,
    )
    result.audits = audit_run(result, problem)
    return result


def run_fully_distributed(cfg: EngineConfig, problem: ProblemInstance, overlay: WorkerOverlay) -> RunResult:
    return _run_peer_design(cfg, problem, overlay, neighbor_aware=False)


def run_neighbor_aware(cfg: EngineConfig, problem: ProblemInstance, overlay: WorkerOverlay) -> RunResult:
    return _run_peer_design(cfg, problem, overlay, neighbor_aware=True)


RUNNERS = {
    "traditional": run_traditional,
    "semi": run_semi_distributed,
    "fully": run_fully_distributed,
    "neighbor": run_neighbor_aware,
}


def run_scenario(cfg: EngineConfig, problem: ProblemInstance, overlay: WorkerOverlay) -> RunResult:
    logger.info("Running %s (seed %d, mode %s)", cfg.scenario, cfg.seed, cfg.mode)
    return RUNNERS[cfg.scenario](cfg, problem, overlay)


# --- Post-run audits -----------------------------------------------------


def mating_messages(hop_log: List[Message]) -> Dict[int, List[str]]:
    """Topic kinds of every message attributed to each mating."""
    per_mating: Dict[int, List[str]] = {}
    for m in hop_log:
        if m.mating_index == NO_MATING:
            continue
        levels = m.topic.split("/")
        kind = levels[0] if len(levels) == 2 else levels[-1]
        per_mating.setdefault(m.mating_index, []).append(kind)
    return per_mating


def message_law_holds(scenario: str, hop_log: List[Message], mating_count: int) -> bool:
    """semi: sendSolution, solution, newChildren plus removal notices; fully/neighbor: exactly two."""
    per_mating = mating_messages(hop_log)
    if scenario == "traditional":
        return not hop_log
    if len(per_mating) != mating_count:
        return False
    for kinds in per_mating.values():
        core = sorted(k for k in kinds if k != "removeSolutions")
        if scenario == "semi" and core != ["newChildren", "sendSolution", "solution"]:
            return False
        if scenario in ("fully", "neighbor") and core != ["sendSolution", "solution"]:
            return False
        if scenario in ("fully", "neighbor") and len(kinds) != 2:
            return False
    return True


def audit_run(result: RunResult, problem: ProblemInstance) -> Dict[str, object]:
    def feasible(text: str) -> bool:
        return bool(is_feasible(problem, chromosome_from_str(text, problem.shape)))

    exchanged = [m.payload["chromosome"] for m in result.hop_log if m.topic.startswith("solution/")]
    return {
        "messageLaw": message_law_holds(result.scenario, result.hop_log, result.mating_count),
        "finalFrontFeasible": all(feasible(p.chromosome) for p in result.final_front if p.chromosome),
        "exchangedFeasible": all(feasible(c) for c in exchanged),
        "snapshotCount": len(result.snapshots),
    }
