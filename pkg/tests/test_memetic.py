import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import all_assignments
from crossdock.exact import solve_exact
from crossdock.instance import Instance, InstanceError, generate_random
from crossdock.memetic import (
    FitnessFunction,
    MemeticConfig,
    TravelCostFitness,
    crossover,
    local_search,
    mutate,
    solve_memetic,
    solve_random_restart,
)
from crossdock.objective import Assignment, apply, check_feasible, evaluate, moves, random_assignment


def neighbours(inst, a):
    return [apply(a, mv) for mv in moves(inst, a)]


def is_local_optimum(inst, a):
    base = evaluate(inst, a)
    return all(evaluate(inst, b) >= base - 1e-9 * max(1.0, base) for b in neighbours(inst, a))


class CheckedCost(TravelCostFitness):
    """Travel cost that asserts feasibility of everything it sees."""

    def __init__(self, inst):
        super().__init__(inst)
        self.seen = 0

    def __call__(self, a, replication_seed=0):
        check_feasible(self.inst, a)
        self.seen += 1
        return super().__call__(a, replication_seed)


# -- local search ------------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("style", ["first_improvement", "best_improvement"])
def test_optimum_is_a_fixed_point(seed, style):
    inst = generate_random(4, 4, 3, 3, seed=seed)
    opt = solve_exact(inst).best
    assert is_local_optimum(inst, opt)  # brute-force neighbour check
    a, cost, taken = local_search(inst, opt, TravelCostFitness(inst), style)
    assert (a, taken) == (opt, 0)
    assert cost == evaluate(inst, opt)


def test_worst_start_reaches_optimum(two_by_two_skewed):
    inst = two_by_two_skewed
    costs = {a: evaluate(inst, a) for a in all_assignments(inst)}
    worst = max(costs, key=costs.get)
    # the neighbourhood graph spans the whole space (breadth-first search)
    reached, frontier = {worst}, [worst]
    while frontier:
        frontier = [b for a in frontier for b in neighbours(inst, a) if b not in reached]
        reached.update(frontier)
    assert reached == set(costs)
    for style in ("first_improvement", "best_improvement"):
        a, cost, taken = local_search(inst, worst, TravelCostFitness(inst), style)
        assert cost == min(costs.values()) == 6.0
        assert taken >= 1


def test_flat_landscape_returns_start():
    inst = Instance(4, 4, 3, 3, np.ones((4, 4)) * 2.0, np.zeros((3, 3), dtype=int))
    start = random_assignment(inst, 1)
    assert local_search(inst, start, TravelCostFitness(inst)) == (start, 0.0, 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["first_improvement", "best_improvement"]))
def test_local_search_descends_to_local_optimum(seed, style):
    inst = generate_random(6, 5, 4, 4, seed=seed)
    start = random_assignment(inst, seed)
    a, cost, _ = local_search(inst, start, TravelCostFitness(inst), style)
    assert cost <= evaluate(inst, start)
    assert cost == evaluate(inst, a)
    assert is_local_optimum(inst, a)


class NoisyCost(FitnessFunction):
    noisy = True
    repeatable = False

    def __init__(self, inst):
        self.inst = inst

    def __call__(self, a, replication_seed=0):
        rng = np.random.default_rng([replication_seed, *a.x, *a.y])
        return evaluate(self.inst, a) + rng.normal(0, 0.5)


def test_noisy_local_search_screens_with_travel_cost():
    inst = generate_random(6, 6, 4, 4, seed=3)
    for k in range(10):
        start = random_assignment(inst, k)
        fit = NoisyCost(inst)
        a, cost, _ = local_search(inst, start, fit, replication_seed=k)
        assert evaluate(inst, a) <= evaluate(inst, start)
        assert cost <= fit(start, k)


# -- variation operators -----------------------------------------------------

def test_crossover_identical_parents():
    a = Assignment((3, 0, 2), (1, 4))
    for seed in range(20):
        assert crossover(a, a, seed) == a


def test_crossover_deterministic():
    a, b = Assignment((0, 1, 2, 3), (0, 1)), Assignment((3, 2, 1, 0), (2, 0))
    assert crossover(a, b, 5) == crossover(a, b, 5)


def test_crossover_mismatched_parents():
    with pytest.raises(ValueError):
        crossover(Assignment((0, 1), (0,)), Assignment((0,), (0,)), 0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 7), st.integers(0, 3))
def test_crossover_child_is_feasible(seed, m, spare):
    inst = generate_random(m + spare, m + spare, m, m, seed=0)
    rng = np.random.default_rng(seed)
    pa, pb = random_assignment(inst, rng), random_assignment(inst, rng)
    child = crossover(pa, pb, rng)
    check_feasible(inst, child)
    if spare == 0:
        assert sorted(child.x) == list(range(m))


def test_mutate_rate_zero():
    inst = generate_random(5, 5, 3, 3, seed=0)
    a = random_assignment(inst, 0)
    assert all(mutate(inst, a, 0.0, s) == a for s in range(50))


def test_mutate_single_point_space():
    inst = Instance(1, 1, 1, 1, [[1.0]], [[1]])
    a = Assignment((0,), (0,))
    assert mutate(inst, a, 1.0, 0) == a


def test_mutate_covers_every_move():
    inst = generate_random(3, 3, 2, 2, seed=0)
    a = Assignment((0, 1), (2, 0))
    expected = {apply(a, mv) for mv in moves(inst, a)}
    assert len(expected) == 6  # 1 + 1 swaps, 2 + 2 relocations
    rng = np.random.default_rng(0)
    seen = {mutate(inst, a, 1.0, rng) for _ in range(10_000)}
    assert seen == expected


# -- full search -------------------------------------------------------------

def test_single_point_search():
    inst = Instance(1, 1, 1, 1, [[2.0]], [[3]])
    rep = solve_memetic(inst)
    assert rep.best == Assignment((0,), (0,))
    assert rep.best_cost == 6.0
    assert rep.history == [(0, 6.0, 1)]


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_matches_exact_on_small_instance(seed):
    inst = generate_random(5, 5, 4, 4, 10.0, 5, seed=seed)
    assert solve_memetic(inst).best_cost == solve_exact(inst).best_cost


def test_reports_are_reproducible():
    inst = generate_random(7, 7, 5, 5, seed=8)
    cfg = MemeticConfig(seed=4, generations=30, population_size=12)
    r1, r2 = solve_memetic(inst, cfg=cfg), solve_memetic(inst, cfg=cfg)
    assert r1 == r2
    assert r1.to_text() == r2.to_text() and r1.history_csv() == r2.history_csv()


@pytest.mark.parametrize("policy", ["every_offspring", "elite_fraction(0.3)", "elite_fraction(0)"])
@pytest.mark.parametrize("style", ["first_improvement", "best_improvement"])
def test_search_invariants(policy, style):
    inst = generate_random(8, 7, 6, 5, seed=11)
    fit = CheckedCost(inst)
    cfg = MemeticConfig(seed=2, generations=25, population_size=10,
                        local_search_policy=policy, local_search_style=style)
    rep = solve_memetic(inst, fit, cfg)
    costs = [c for _, c, _ in rep.history]
    assert all(b <= a for a, b in zip(costs, costs[1:]))
    assert rep.total_evaluations == fit.seen <= cfg.max_evaluations
    assert rep.best_cost == evaluate(inst, rep.best)
    if policy == "every_offspring":
        assert is_local_optimum(inst, rep.best)


def test_evaluation_budget():
    inst = generate_random(10, 10, 8, 8, seed=1)
    cfg = MemeticConfig(seed=0, max_evaluations=30)
    rep = solve_memetic(inst, cfg=cfg)
    assert rep.terminated_by == "max_evaluations"
    assert rep.total_evaluations <= 30
    assert rep.best_cost == evaluate(inst, rep.best)


def test_budget_with_noisy_fitness():
    inst = generate_random(6, 6, 5, 5, seed=1)
    rep = solve_memetic(inst, NoisyCost(inst), MemeticConfig(seed=0, max_evaluations=57))
    assert rep.terminated_by == "max_evaluations"
    assert rep.total_evaluations <= 57


def test_stagnation_and_generation_limits():
    inst = generate_random(5, 5, 4, 4, seed=1)
    rep = solve_memetic(inst, cfg=MemeticConfig(stagnation_limit=3, generations=500))
    assert rep.terminated_by == "stagnation"
    rep = solve_memetic(inst, cfg=MemeticConfig(generations=2))
    assert rep.terminated_by == "generations"
    assert [g for g, _, _ in rep.history] == [0, 1, 2]


@pytest.mark.parametrize("kwargs", [
    {"population_size": 1},
    {"tournament_size": 0},
    {"tournament_size": 60},
    {"crossover_rate": 1.5},
    {"mutation_rate": -0.1},
    {"local_search_policy": "sometimes"},
    {"local_search_policy": "elite_fraction(2)"},
    {"local_search_style": "greedy"},
])
def test_config_validation(kwargs):
    with pytest.raises(InstanceError):
        MemeticConfig(**kwargs)


def test_random_restart_baseline():
    inst = generate_random(6, 6, 4, 4, seed=5)
    rep = solve_random_restart(inst, restarts=20, seed=3)
    assert rep.method == "random-restart"
    assert len(rep.history) == 20
    assert is_local_optimum(inst, rep.best)
    assert rep == solve_random_restart(inst, restarts=20, seed=3)
