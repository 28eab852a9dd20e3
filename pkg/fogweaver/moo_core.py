"""
NSGA-II primitives shared by every engine: Pareto dominance, non-dominated
sorting, crowding distance, binary tournament, variation operators,
steady-state replacement and reference fronts. Both objectives are
minimized.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .fapp import ObjectiveVector, Placement, ProblemInstance, evaluate, repair

Point = Tuple[float, float]


@dataclass(frozen=True, eq=False)
class Individual:
    solution_id: int
    objectives: ObjectiveVector
    chromosome: Optional[Placement] = field(default=None, repr=False)
    owner_worker_id: Optional[int] = None

    @property
    def point(self) -> Point:
        return self.objectives.as_tuple()


def _as_point(o) -> Point:
    return o.as_tuple() if isinstance(o, ObjectiveVector) else (float(o[0]), float(o[1]))


def dominates(a, b) -> bool:
    a, b = _as_point(a), _as_point(b)
    return a[0] <= b[0] and a[1] <= b[1] and (a[0] < b[0] or a[1] < b[1])


def _domination_matrix(f: np.ndarray) -> np.ndarray:
    # d[i, j] is True when i dominates j
    le = (f[:, None, :] <= f[None, :, :]).all(axis=2)
    lt = (f[:, None, :] < f[None, :, :]).any(axis=2)
    return le & lt


def fast_non_dominated_sort(objectives: Sequence) -> List[List[int]]:
    """Peels the points into fronts; indices inside a front keep input order."""
    f = np.array([_as_point(o) for o in objectives], dtype=np.float64).reshape(-1, 2)
    if len(f) == 0:
        return []
    dom = _domination_matrix(f)
    dominated_by = dom.sum(axis=0)
    remaining = np.ones(len(f), dtype=bool)
    fronts = []
    while remaining.any():
        front = np.flatnonzero(remaining & (dominated_by == 0))
        fronts.append(front.tolist())
        remaining[front] = False
        dominated_by = dominated_by - dom[front].sum(axis=0)
    return fronts


def crowding_distance(front: Sequence, keys: Optional[Sequence[int]] = None) -> List[float]:
    """
    Standard NSGA-II crowding over one front. Per objective the members are
    ordered by (value, other objective, key) and only the first and last get
    +inf, so copies of an extreme point are not all protected. `keys`
    defaults to input positions; rank_population passes solution ids.
    """
    f = np.array([_as_point(o) for o in front], dtype=np.float64).reshape(-1, 2)
    n = len(f)
    if n == 0:
        return []
    keys = np.arange(n) if keys is None else np.asarray(keys)
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist.tolist()
    for m in range(f.shape[1]):
        order = np.lexsort((keys, f[:, 1 - m], f[:, m]))
        values = f[order, m]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = values[-1] - values[0]
        if span > 0:
            dist[order[1:-1]] += (values[2:] - values[:-2]) / span
    return dist.tolist()


@dataclass
class RankedPopulation:
    members: List[Individual]
    front_index: Dict[int, int]
    crowding: Dict[int, float]

    def __len__(self):
        return len(self.members)

    @property
    def ids(self) -> List[int]:
        return [m.solution_id for m in self.members]

    def get(self, solution_id: int) -> Individual:
        return next(m for m in self.members if m.solution_id == solution_id)

    def sort_key(self, member: Individual):
        return (self.front_index[member.solution_id], -self.crowding[member.solution_id], member.solution_id)

    def sorted_members(self) -> List[Individual]:
        return sorted(self.members, key=self.sort_key)

    def first_front(self) -> List[Individual]:
        return [m for m in self.members if self.front_index[m.solution_id] == 1]


def rank_population(members: Iterable[Individual]) -> RankedPopulation:
    members = list(members)
    front_index, crowding = {}, {}
    for k, front in enumerate(fast_non_dominated_sort([m.point for m in members]), start=1):
        distances = crowding_distance(
            [members[i].point for i in front], [members[i].solution_id for i in front]
        )
        for i, d in zip(front, distances):
            front_index[members[i].solution_id] = k
            crowding[members[i].solution_id] = d
    return RankedPopulation(members, front_index, crowding)


def binary_tournament(pop: RankedPopulation, rng: np.random.Generator) -> int:
    """Two uniform draws with replacement; lower front, then larger crowding, then a coin."""
    i, j = rng.integers(len(pop), size=2)
    a, b = pop.members[int(i)], pop.members[int(j)]
    ka = (pop.front_index[a.solution_id], -pop.crowding[a.solution_id])
    kb = (pop.front_index[b.solution_id], -pop.crowding[b.solution_id])
    if ka < kb:
        return a.solution_id
    if kb < ka:
        return b.solution_id
    return a.solution_id if rng.random() < 0.5 else b.solution_id


def two_point_crossover(p1: Placement, p2: Placement, rng: np.random.Generator) -> Tuple[Placement, Placement]:
    """Swaps the segment [c1, c2) of the row-major flattened parents. No repair."""
    if p1.shape != p2.shape:
        raise ValueError("parents differ in shape")
    length = p1.size
    c1, c2 = sorted(int(c) for c in rng.choice(length + 1, size=2, replace=False))
    a, b = p1.ravel().copy(), p2.ravel().copy()
    a[c1:c2], b[c1:c2] = p2.ravel()[c1:c2], p1.ravel()[c1:c2]
    return a.reshape(p1.shape), b.reshape(p1.shape)


def crossover(problem: ProblemInstance, p1: Placement, p2: Placement, rng: np.random.Generator):
    c1, c2 = two_point_crossover(p1, p2, rng)
    return repair(problem, c1, rng), repair(problem, c2, rng)


def flip_gene(p: Placement, rng: np.random.Generator) -> Placement:
    x = p.copy()
    flat = x.reshape(-1)
    g = int(rng.integers(flat.size))
    flat[g] = 1 - flat[g]
    return x


def mutate(problem: ProblemInstance, p: Placement, rng: np.random.Generator) -> Placement:
    """Flips one uniformly chosen gene, then repairs."""
    return repair(problem, flip_gene(p, rng), rng)


def make_children(
    problem: ProblemInstance,
    p1: Placement,
    p2: Placement,
    rng: np.random.Generator,
    mutation_probability: float,
) -> List[Tuple[Placement, ObjectiveVector]]:
    """Crossover, per-child mutation with probability rho_mut, evaluation."""
    children = []
    for child in crossover(problem, p1, p2, rng):
        if rng.random() < mutation_probability:
            child = mutate(problem, child, rng)
        children.append((child, evaluate(problem, child)))
    return children


def steady_state_insert(
    pop: RankedPopulation, children: Sequence[Individual], capacity: int
) -> Tuple[RankedPopulation, List[int]]:
    """
    Ranks pop plus children together, keeps the first `capacity` under
    (front asc, crowding desc, id asc) and re-ranks the survivors.
    """
    if capacity < 1:
        raise ValueError("capacity must be at least 1")
    union = rank_population(list(pop.members) + list(children))
    ordered = union.sorted_members()
    survivors, removed = ordered[:capacity], ordered[capacity:]
    return rank_population(survivors), [m.solution_id for m in removed]


def non_dominated(points: Iterable) -> List[Point]:
    pts = [_as_point(p) for p in points]
    if not pts:
        return []
    return [pts[i] for i in fast_non_dominated_sort(pts)[0]]


def reference_front(fronts: Iterable[Iterable]) -> List[Point]:
    """Non-dominated subset of the union of fronts, duplicates collapsed."""
    union = sorted({_as_point(p) for front in fronts for p in front})
    if not union:
        raise ValueError("reference front needs at least one point")
    return non_dominated(union)
