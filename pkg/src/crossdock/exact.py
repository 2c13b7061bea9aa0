"""Exhaustive enumeration of every feasible assignment.

Meant as a ground-truth oracle for small instances, so it does no pruning.
For each inbound arrangement ``x`` the costs of all outbound arrangements
are computed in one vectorised step.  Candidates near the floating-point
minimum are then re-scored with :func:`~crossdock.objective.evaluate`, so
ties and the reported optimum are decided on correctly rounded costs.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .instance import Instance
from .objective import Assignment, evaluate

__all__ = ["ExactResult", "BudgetExceeded", "solve_exact", "enumeration_size", "DEFAULT_BUDGET"]

DEFAULT_BUDGET = 10**7

# float screening window; real optima can only differ by rounding inside it
_SCREEN_RTOL = 1e-9


class BudgetExceeded(RuntimeError):
    def __init__(self, count: int, limit: int):
        self.count = count
        self.limit = limit
        super().__init__(f"exact enumeration needs {count} evaluations, budget is {limit}")


@dataclass(frozen=True)
class ExactResult:
    best: Assignment
    best_cost: float
    num_evaluated: int
    optima_count: int
    optima: tuple[Assignment, ...] = ()


def enumeration_size(inst: Instance) -> int:
    return math.perm(inst.I, inst.M) * math.perm(inst.J, inst.N)


def _scan_chunk(inst: Instance, xs: list[tuple[int, ...]], ys: np.ndarray):
    """Return (float minimum, candidate list) over one block of x arrangements."""
    w = inst.flow.astype(np.float64)
    rows = np.arange(inst.N)
    block_min = math.inf
    per_x = []
    for x in xs:
        # c[n, j]: cost of putting destination n on outbound door j, given x
        c = (w.T @ inst.distance[list(x), :])
        costs = c[rows, ys].sum(axis=1)
        lo = float(costs.min())
        per_x.append((x, costs, lo))
        block_min = min(block_min, lo)
    return block_min, per_x


def solve_exact(inst: Instance, budget_limit: int = DEFAULT_BUDGET, workers: int = 1,
                collect_optima: bool = False) -> ExactResult:
    """Global minimum of the travel cost by full enumeration.

    Raises :class:`BudgetExceeded` when ``P(I,M) * P(J,N)`` is above
    ``budget_limit``.  The returned ``best`` is the lexicographically smallest
    optimum; ``optima`` holds every optimum when ``collect_optima`` is set.
    """
    count = enumeration_size(inst)
    if count > budget_limit:
        raise BudgetExceeded(count, budget_limit)

    xs = list(itertools.permutations(range(inst.I), inst.M))
    ys = np.array(list(itertools.permutations(range(inst.J), inst.N)), dtype=np.intp)
    ys = ys.reshape(len(ys), inst.N)

    workers = max(1, int(workers))
    if workers == 1 or len(xs) < 2 * workers:
        chunks = [xs]
    else:
        size = -(-len(xs) // workers)
        chunks = [xs[k:k + size] for k in range(0, len(xs), size)]
    if len(chunks) == 1:
        results = [_scan_chunk(inst, chunks[0], ys)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda ch: _scan_chunk(inst, ch, ys), chunks))

    float_min = min(r[0] for r in results)
    cutoff = float_min + _SCREEN_RTOL * max(1.0, abs(float_min))

    scored: list[tuple[float, Assignment]] = []
    for _, per_x in results:
        for x, costs, lo in per_x:
            if lo > cutoff:
                continue
            for k in np.flatnonzero(costs <= cutoff):
                a = Assignment(x, tuple(ys[k].tolist()))
                scored.append((evaluate(inst, a), a))

    best_cost = min(c for c, _ in scored)
    optima = sorted(a for c, a in scored if c == best_cost)
    return ExactResult(best=optima[0], best_cost=best_cost, num_evaluated=count,
                       optima_count=len(optima),
                       optima=tuple(optima) if collect_optima else ())
