"""Memetic search over door assignments.

A generational genetic algorithm (tournament selection, segment crossover
per side, single-move mutation, elitism of one) whose offspring are improved
by local search and written back into the population (Lamarckian).  The
fitness can be the deterministic travel cost or any noisy estimator, see
:class:`FitnessFunction`.
"""
from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field

import numpy as np

from .instance import Instance, InstanceError
from .objective import (
    Assignment,
    Neighborhood,
    apply,
    evaluate,
    format_assignment,
    moves,
    random_assignment,
)

__all__ = [
    "FitnessFunction",
    "TravelCostFitness",
    "MemeticConfig",
    "SolveReport",
    "local_search",
    "crossover",
    "mutate",
    "solve_memetic",
    "solve_random_restart",
]

FIRST_IMPROVEMENT = "first_improvement"
BEST_IMPROVEMENT = "best_improvement"
_POLICY_RE = re.compile(r"(every_offspring)\Z|elite_fraction\(\s*([0-9.eE+-]+)\s*\)\Z")


class FitnessFunction:
    """Maps ``(assignment, replication_seed)`` to a cost to be minimised.

    ``noisy`` marks stochastic estimators.  ``repeatable`` promises that the
    same assignment always gets the same value (true for deterministic costs
    and for estimators that ignore the replication seed), which lets the
    search cache values.
    """

    noisy = False
    repeatable = True

    def __call__(self, a: Assignment, replication_seed: int = 0) -> float:
        raise NotImplementedError


class TravelCostFitness(FitnessFunction):
    """The deterministic travel cost; ignores the replication seed."""

    def __init__(self, inst: Instance):
        self.inst = inst

    def __call__(self, a, replication_seed=0):
        return evaluate(self.inst, a)


@dataclass(frozen=True)
class MemeticConfig:
    population_size: int = 50
    generations: int = 200
    tournament_size: int = 3
    crossover_rate: float = 0.9
    mutation_rate: float = 0.2
    local_search_policy: str = "every_offspring"
    local_search_style: str = FIRST_IMPROVEMENT
    max_evaluations: int = 1_000_000
    stagnation_limit: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise InstanceError("population_size must be ≥ 2")
        if self.generations < 0:
            raise InstanceError("generations must be ≥ 0")
        if not 1 <= self.tournament_size <= self.population_size:
            raise InstanceError("tournament_size must lie in [1, population_size]")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InstanceError(f"{name} must lie in [0, 1]")
        if self.local_search_style not in (FIRST_IMPROVEMENT, BEST_IMPROVEMENT):
            raise InstanceError(f"unknown local_search_style {self.local_search_style!r}")
        self.elite_fraction  # validates the policy string
        if self.max_evaluations < 1:
            raise InstanceError("max_evaluations must be ≥ 1")
        if self.stagnation_limit < 1:
            raise InstanceError("stagnation_limit must be ≥ 1")

    @property
    def elite_fraction(self) -> float:
        """Fraction of offspring that get local search (1.0 for every_offspring)."""
        match = _POLICY_RE.match(self.local_search_policy.strip())
        if not match:
            raise InstanceError(
                f"local_search_policy must be 'every_offspring' or 'elite_fraction(f)', "
                f"got {self.local_search_policy!r}")
        if match.group(1):
            return 1.0
        frac = float(match.group(2))
        if not 0.0 <= frac <= 1.0:
            raise InstanceError("elite_fraction must lie in [0, 1]")
        return frac


@dataclass
class SolveReport:
    best: Assignment
    best_cost: float
    history: list[tuple[int, float, int]]
    total_evaluations: int
    terminated_by: str
    seed: int
    method: str = "memetic"
    # every population member's fitness, keyed by assignment
    archive: dict = field(default_factory=dict, repr=False, compare=False)

    def to_text(self, extra: dict | None = None) -> str:
        lines = [
            f"method={self.method}",
            f"best_cost={self.best_cost!r}",
            f"total_evaluations={self.total_evaluations}",
            f"terminated_by={self.terminated_by}",
            f"seed={self.seed}",
            f"generations_run={self.history[-1][0] if self.history else 0}",
        ]
        lines += [f"{k}={v}" for k, v in (extra or {}).items()]
        return "\n".join(lines) + "\n" + format_assignment(self.best)

    def history_csv(self) -> str:
        rows = ["generation,best_cost,evaluations"]
        rows += [f"{g},{c!r},{e}" for g, c, e in self.history]
        return "\n".join(rows) + "\n"


class _BudgetExhausted(Exception):
    pass


class _Evaluator:
    """Counts fitness calls against a budget and caches repeatable values."""

    def __init__(self, fitness: FitnessFunction, limit: float = math.inf):
        self.fitness = fitness
        self.limit = limit
        self.count = 0
        self.exhausted = False
        self.cache: dict | None = {} if fitness.repeatable else None

    def __call__(self, a: Assignment, seed: int) -> float:
        if self.cache is not None and a in self.cache:
            return self.cache[a]
        if self.count >= self.limit:
            raise _BudgetExhausted
        self.count += 1
        value = float(self.fitness(a, seed))
        if self.cache is not None:
            self.cache[a] = value
        return value


def _descent_tolerance(deltas: np.ndarray) -> float:
    return 1e-12 * max(1.0, float(np.abs(deltas).max()))


def _local_search(inst, start, evaluator, style, seed, start_cost=None):
    """Returns ``(assignment, cost, moves)``.  If the budget runs out after the
    current point has a known cost, stops there and sets ``evaluator.exhausted``."""
    a = start
    taken = 0
    screen_only = isinstance(evaluator.fitness, TravelCostFitness)
    cost = None if screen_only else (start_cost if start_cost is not None else evaluator(a, seed))
    while True:
        nb = Neighborhood(inst, a)
        if len(nb) == 0:
            break
        improving = np.flatnonzero(nb.deltas < -_descent_tolerance(nb.deltas))
        if improving.size == 0:
            break
        if screen_only:
            k = improving[0] if style == FIRST_IMPROVEMENT else improving[np.argmin(nb.deltas[improving])]
            a = apply(a, nb.move(int(k)))
            taken += 1
            continue
        # noisy or foreign fitness: the travel-cost delta pre-screens, the
        # fitness decides
        chosen = None
        try:
            chosen = _pick_candidate(a, nb, improving, evaluator, seed, cost, style)
        except _BudgetExhausted:
            evaluator.exhausted = True
            return a, cost, taken
        if chosen is None:
            break
        a, cost = chosen
        taken += 1
    if cost is None:
        cost = evaluator(a, seed) if (a != start or start_cost is None) else start_cost
    return a, cost, taken


def _pick_candidate(a, nb, improving, evaluator, seed, cost, style):
    if style == FIRST_IMPROVEMENT:
        for k in improving:
            cand = apply(a, nb.move(int(k)))
            value = evaluator(cand, seed)
            if value < cost:
                return cand, value
        return None
    best_val, best_cand = math.inf, None
    for k in improving:
        cand = apply(a, nb.move(int(k)))
        value = evaluator(cand, seed)
        if value < best_val:
            best_val, best_cand = value, cand
    return (best_cand, best_val) if best_val < cost else None


def local_search(inst: Instance, start: Assignment, fitness: FitnessFunction,
                 style: str = FIRST_IMPROVEMENT, replication_seed: int = 0):
    """Descend to a local optimum of the swap-and-relocate neighbourhood.

    Only strictly improving moves are taken.  With the travel-cost fitness,
    moves are judged by their exact deltas.  With any other fitness,
    improving deltas only nominate candidates, and a move is accepted when
    the fitness confirms it.

    Returns ``(assignment, cost, moves_taken)``.
    """
    if style not in (FIRST_IMPROVEMENT, BEST_IMPROVEMENT):
        raise ValueError(f"unknown local search style {style!r}")
    return _local_search(inst, start, _Evaluator(fitness), style, replication_seed)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _recombine_side(pa, pb, rng) -> tuple[int, ...]:
    size = len(pa)
    lo = int(rng.integers(0, size))
    hi = int(rng.integers(lo + 1, size + 1))
    child: list[int | None] = [None] * size
    used: set[int] = set()
    for k in range(lo, hi):
        child[k] = pa[k]
        used.add(pa[k])
    for k in range(size):
        if child[k] is None and pb[k] not in used:
            child[k] = pb[k]
            used.add(pb[k])
    for k in range(size):
        if child[k] is None and pa[k] not in used:
            child[k] = pa[k]
            used.add(pa[k])
    door = 0
    for k in range(size):
        if child[k] is None:
            while door in used:
                door += 1
            child[k] = door
            used.add(door)
    return tuple(child)


def crossover(parent_a: Assignment, parent_b: Assignment, seed=None) -> Assignment:
    """Segment crossover applied to the x side and the y side independently.

    A random segment of ``parent_a`` is kept.  Positions outside it take
    ``parent_b``'s door when that door is still free, then ``parent_a``'s
    door, and finally the lowest-numbered unused door.
    """
    if len(parent_a.x) != len(parent_b.x) or len(parent_a.y) != len(parent_b.y):
        raise ValueError("parents have mismatched dimensions")
    rng = _as_rng(seed)
    return Assignment(_recombine_side(parent_a.x, parent_b.x, rng),
                      _recombine_side(parent_a.y, parent_b.y, rng))


def mutate(inst: Instance, a: Assignment, rate: float, seed=None) -> Assignment:
    """With probability ``rate`` apply one uniformly chosen non-identity move."""
    rng = _as_rng(seed)
    if rng.random() >= rate:
        return a
    options = list(moves(inst, a))
    if not options:
        return a
    return apply(a, options[int(rng.integers(len(options)))])


def _key(ind):
    return (ind[1], ind[0])


def solve_memetic(inst: Instance, fitness: FitnessFunction | None = None,
                  cfg: MemeticConfig | None = None) -> SolveReport:
    """Minimise ``fitness`` (travel cost by default) with the memetic algorithm.

    Stops after ``cfg.generations`` generations, when ``cfg.max_evaluations``
    fitness calls are used up, or after ``cfg.stagnation_limit`` generations
    without a better best-so-far, whichever happens first.
    """
    fitness = fitness if fitness is not None else TravelCostFitness(inst)
    cfg = cfg if cfg is not None else MemeticConfig()
    rng = np.random.default_rng(cfg.seed)
    ev = _Evaluator(fitness, cfg.max_evaluations)
    archive: dict[Assignment, float] = {}
    history: list[tuple[int, float, int]] = []
    style = cfg.local_search_style
    frac = cfg.elite_fraction

    def record(ind):
        archive.setdefault(ind[0], ind[1])
        return ind

    def improve(a, seed, cost=None):
        b, c, _ = _local_search(inst, a, ev, style, seed, start_cost=cost)
        return record((b, c))

    def check_budget():
        if ev.exhausted:
            raise _BudgetExhausted

    def new_seeds(k):
        return rng.integers(0, 2**63 - 1, size=k, dtype=np.int64).tolist()

    if inst.I == inst.M == 1 and inst.J == inst.N == 1:
        a = Assignment((0,), (0,))
        c = ev(a, new_seeds(1)[0])
        record((a, c))
        return SolveReport(a, c, [(0, c, ev.count)], ev.count, "generations", cfg.seed,
                           archive=archive)

    def build_generation(candidates, seeds, done):
        """Evaluate and locally improve ``candidates``; finished ones go to ``done``."""
        n_ls = math.ceil(frac * len(candidates))
        if n_ls >= len(candidates):
            for a, s in zip(candidates, seeds):
                done.append(improve(a, s))
                check_budget()
            return
        evaluated = []
        try:
            for a, s in zip(candidates, seeds):
                evaluated.append((a, ev(a, s), s))
        except _BudgetExhausted:
            done.extend(record((a, c)) for a, c, _ in evaluated)
            raise
        order = sorted(range(len(evaluated)), key=lambda k: (evaluated[k][1], evaluated[k][0]))
        chosen = set(order[:n_ls])
        for k, (a, c, s) in enumerate(evaluated):
            done.append(improve(a, s, c) if k in chosen else record((a, c)))
            check_budget()

    best = None
    terminated = "generations"
    pop: list[tuple[Assignment, float]] = []
    try:
        starts = [random_assignment(inst, rng) for _ in range(cfg.population_size)]
        build_generation(starts, new_seeds(len(starts)), pop)
    except _BudgetExhausted:
        terminated = "max_evaluations"
    best = min(pop, key=_key)
    history.append((0, best[1], ev.count))

    stagnant = 0
    generation = 1
    while terminated == "generations" and generation <= cfg.generations:
        children = []
        for _ in range(cfg.population_size - 1):
            p1 = _tournament(pop, cfg.tournament_size, rng)
            p2 = _tournament(pop, cfg.tournament_size, rng)
            if rng.random() < cfg.crossover_rate:
                child = crossover(p1[0], p2[0], rng)
            else:
                child = p1[0]
            children.append(mutate(inst, child, cfg.mutation_rate, rng))
        offspring: list[tuple[Assignment, float]] = []
        try:
            build_generation(children, new_seeds(len(children)), offspring)
        except _BudgetExhausted:
            terminated = "max_evaluations"
        pop = [best] + offspring
        gen_best = min(pop, key=_key)
        if gen_best[1] < best[1]:
            best = gen_best
            stagnant = 0
        else:
            stagnant += 1
        history.append((generation, best[1], ev.count))
        if terminated == "generations" and stagnant >= cfg.stagnation_limit:
            terminated = "stagnation"
        generation += 1

    return SolveReport(best[0], best[1], history, ev.count, terminated, cfg.seed,
                       archive=archive)


def _tournament(pop, size, rng):
    picks = rng.integers(0, len(pop), size=size)
    return min((pop[int(k)] for k in picks), key=_key)


def solve_random_restart(inst: Instance, fitness: FitnessFunction | None = None,
                         restarts: int = 100, style: str = FIRST_IMPROVEMENT,
                         seed: int = 0, max_evaluations: int = 1_000_000) -> SolveReport:
    """Baseline: independent random starts, each followed by local search."""
    fitness = fitness if fitness is not None else TravelCostFitness(inst)
    rng = np.random.default_rng(seed)
    ev = _Evaluator(fitness, max_evaluations)
    archive: dict[Assignment, float] = {}
    history = []
    best = None
    terminated = "restarts"
    try:
        for r in range(restarts):
            start = random_assignment(inst, rng)
            rep_seed = int(rng.integers(0, 2**63 - 1, dtype=np.int64))
            a, c, _ = _local_search(inst, start, ev, style, rep_seed)
            archive.setdefault(a, c)
            if best is None or (c, a) < (best[1], best[0]):
                best = (a, c)
            history.append((r, best[1], ev.count))
    except _BudgetExhausted:
        terminated = "max_evaluations"
        if best is None:
            raise ValueError("evaluation budget too small for a single restart") from None
    return SolveReport(best[0], best[1], history, ev.count, terminated, seed,
                       method="random-restart", archive=archive)


def config_record(cfg: MemeticConfig) -> dict:
    return asdict(cfg)
