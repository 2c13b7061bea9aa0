"""Memetic search driven by the simulated cost.

During the search every candidate is scored by the mean refined cost over a
few replications.  All candidates share one master seed, so replication r
sees the same arrivals and unload times for every candidate.  When the
search ends, the best distinct assignments are re-estimated with more
replications and the winner is picked on those means.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .des import CostEstimate, SimConfig, estimate_cost
from .instance import Instance, InstanceError
from .memetic import FitnessFunction, MemeticConfig, SolveReport, solve_memetic
from .objective import Assignment, format_assignment

__all__ = ["SimOptConfig", "SimulationFitness", "EliteRow", "SimOptReport", "solve_simopt"]


@dataclass(frozen=True)
class SimOptConfig:
    memetic: MemeticConfig = field(default_factory=MemeticConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    search_replications: int = 5
    final_replications: int = 50
    elite_rerank_size: int = 10

    def __post_init__(self):
        if self.search_replications < 1:
            raise InstanceError("search_replications must be ≥ 1")
        if self.final_replications < self.search_replications:
            raise InstanceError("final_replications must be ≥ search_replications")
        if self.elite_rerank_size < 1:
            raise InstanceError("elite_rerank_size must be ≥ 1")


class SimulationFitness(FitnessFunction):
    """Mean refined cost over ``replications`` runs seeded from one master seed.

    The replication seed passed by the search is ignored, so every
    candidate sees the same random inputs.
    """

    noisy = True
    repeatable = True

    def __init__(self, inst: Instance, sim: SimConfig, replications: int,
                 master_seed: int | None = None, threads: int = 1):
        self.inst = inst
        self.sim = sim
        self.replications = replications
        self.master_seed = sim.seed if master_seed is None else master_seed
        self.threads = threads
        self.estimates: dict[Assignment, CostEstimate] = {}

    def __call__(self, a, replication_seed=0):
        est = self.estimates.get(a)
        if est is None:
            est = estimate_cost(self.inst, a, self.sim, self.replications,
                                self.master_seed, threads=self.threads)
            self.estimates[a] = est
        return est.mean


@dataclass(frozen=True)
class EliteRow:
    rank: int
    assignment: Assignment
    search_mean: float
    search_dev: float
    final_mean: float
    final_dev: float


ELITE_COLUMNS = ("rank", "X", "Y", "search_mean", "search_dev", "final_mean", "final_dev")


@dataclass
class SimOptReport:
    search: SolveReport
    winner: Assignment
    winner_mean: float
    winner_dev: float
    elite: list[EliteRow]

    def to_text(self) -> str:
        lines = [
            "method=simopt",
            f"best_cost={self.winner_mean!r}",
            f"best_dev={self.winner_dev!r}",
            f"search_best_cost={self.search.best_cost!r}",
            f"total_evaluations={self.search.total_evaluations}",
            f"terminated_by={self.search.terminated_by}",
            f"seed={self.search.seed}",
            f"elite_size={len(self.elite)}",
        ]
        return "\n".join(lines) + "\n" + format_assignment(self.winner)

    def elite_csv(self) -> str:
        rows = [",".join(ELITE_COLUMNS)]
        for row in self.elite:
            rows.append(",".join([
                str(row.rank),
                " ".join(str(i + 1) for i in row.assignment.x),
                " ".join(str(j + 1) for j in row.assignment.y),
                repr(row.search_mean), repr(row.search_dev),
                repr(row.final_mean), repr(row.final_dev),
            ]))
        return "\n".join(rows) + "\n"


def solve_simopt(inst: Instance, cfg: SimOptConfig | None = None, threads: int = 1) -> SimOptReport:
    cfg = cfg or SimOptConfig()
    fitness = SimulationFitness(inst, cfg.sim, cfg.search_replications, threads=threads)
    search = solve_memetic(inst, fitness, cfg.memetic)

    ranked = sorted(search.archive.items(), key=lambda kv: (kv[1], kv[0]))
    elite_set = [a for a, _ in ranked[: cfg.elite_rerank_size]]

    rows = []
    for a in elite_set:
        s_est = fitness.estimates[a]
        if cfg.final_replications == cfg.search_replications:
            f_est = s_est
        else:
            f_est = estimate_cost(inst, a, cfg.sim, cfg.final_replications,
                                  fitness.master_seed, threads=threads)
        rows.append((f_est.mean, a, s_est, f_est))
    rows.sort(key=lambda r: (r[0], r[1]))

    elite = [EliteRow(k + 1, a, s.mean, s.std, f.mean, f.std)
             for k, (_, a, s, f) in enumerate(rows)]
    top = elite[0]
    return SimOptReport(search=search, winner=top.assignment, winner_mean=top.final_mean,
                        winner_dev=top.final_dev, elite=elite)
