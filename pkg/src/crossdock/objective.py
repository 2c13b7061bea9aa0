"""Assignments, moves and the travel-cost objective.

The cost of an assignment is ``sum_{m,n} d[x[m], y[n]] * w[m, n]``.
:func:`evaluate` returns the correctly rounded value of that sum: every
product is split into an exact pair of floats and the pairs are added with
:func:`math.fsum`.  The result does not depend on summation order, which
lets the simulator reproduce it bit-for-bit from individual trips.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np

from .instance import Instance, ParseError

__all__ = [
    "Assignment",
    "FeasibilityError",
    "MoveError",
    "SwapOrigins",
    "SwapDestinations",
    "RelocateOrigin",
    "RelocateDestination",
    "Move",
    "evaluate",
    "evaluate_move_delta",
    "apply",
    "random_assignment",
    "check_feasible",
    "moves",
    "Neighborhood",
    "format_assignment",
    "parse_assignment",
]


class FeasibilityError(ValueError):
    """Assignment does not fit the instance (duplicate or out-of-range door)."""


class MoveError(ValueError):
    """Move is invalid for the given assignment."""


@dataclass(frozen=True, order=True)
class Assignment:
    """``x[m]`` is the inbound door of origin m, ``y[n]`` the outbound door of destination n.

    Door indices are 0-based.  Ordering is lexicographic on ``(x, y)``.
    """

    x: tuple[int, ...]
    y: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(int(v) for v in self.x))
        object.__setattr__(self, "y", tuple(int(v) for v in self.y))


@dataclass(frozen=True)
class SwapOrigins:
    m1: int
    m2: int


@dataclass(frozen=True)
class SwapDestinations:
    n1: int
    n2: int


@dataclass(frozen=True)
class RelocateOrigin:
    m: int
    door: int


@dataclass(frozen=True)
class RelocateDestination:
    n: int
    door: int


Move = Union[SwapOrigins, SwapDestinations, RelocateOrigin, RelocateDestination]


def check_feasible(inst: Instance, a: Assignment) -> None:
    """Raise :class:`FeasibilityError` naming the first offending index."""
    for side, doors, count, limit in (("x", a.x, inst.M, inst.I), ("y", a.y, inst.N, inst.J)):
        if len(doors) != count:
            raise FeasibilityError(f"{side} has {len(doors)} entries, expected {count}")
        seen: dict[int, int] = {}
        for k, door in enumerate(doors):
            if not 0 <= door < limit:
                raise FeasibilityError(f"{side}[{k}] = {door} is outside [0, {limit})")
            if door in seen:
                raise FeasibilityError(
                    f"{side}[{k}] = {door} duplicates {side}[{seen[door]}]")
            seen[door] = k


_SPLITTER = 134217729.0  # 2**27 + 1


def _two_product(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dekker's error-free product: ``p + e == a * b`` exactly."""
    p = a * b
    t = _SPLITTER * a
    a_hi = t - (t - a)
    a_lo = a - a_hi
    t = _SPLITTER * b
    b_hi = t - (t - b)
    b_lo = b - b_hi
    e = ((a_hi * b_hi - p) + a_hi * b_lo + a_lo * b_hi) + a_lo * b_lo
    return p, e


def exact_weighted_sum(values: np.ndarray, weights: np.ndarray) -> float:
    """Correctly rounded ``sum(values * weights)``."""
    p, e = _two_product(np.asarray(values, dtype=np.float64).ravel(),
                        np.asarray(weights, dtype=np.float64).ravel())
    return math.fsum(np.concatenate([p, e]).tolist())


def evaluate(inst: Instance, a: Assignment) -> float:
    check_feasible(inst, a)
    sub = inst.distance[np.ix_(a.x, a.y)]
    return exact_weighted_sum(sub, inst.flow)


def _validate_move(inst: Instance, a: Assignment, mv: Move) -> None:
    if isinstance(mv, SwapOrigins):
        if not (0 <= mv.m1 < inst.M and 0 <= mv.m2 < inst.M):
            raise MoveError(f"origin index out of range in {mv}")
    elif isinstance(mv, SwapDestinations):
        if not (0 <= mv.n1 < inst.N and 0 <= mv.n2 < inst.N):
            raise MoveError(f"destination index out of range in {mv}")
    elif isinstance(mv, RelocateOrigin):
        if not 0 <= mv.m < inst.M:
            raise MoveError(f"origin index out of range in {mv}")
        if not 0 <= mv.door < inst.I:
            raise MoveError(f"inbound door out of range in {mv}")
        if mv.door in a.x:
            raise MoveError(f"inbound door {mv.door} is already assigned")
    elif isinstance(mv, RelocateDestination):
        if not 0 <= mv.n < inst.N:
            raise MoveError(f"destination index out of range in {mv}")
        if not 0 <= mv.door < inst.J:
            raise MoveError(f"outbound door out of range in {mv}")
        if mv.door in a.y:
            raise MoveError(f"outbound door {mv.door} is already assigned")
    else:
        raise MoveError(f"unknown move {mv!r}")


def evaluate_move_delta(inst: Instance, a: Assignment, mv: Move) -> float:
    """Cost change caused by ``mv``, in O(M + N)."""
    _validate_move(inst, a, mv)
    d, w = inst.distance, inst.flow
    if isinstance(mv, SwapOrigins):
        i1, i2 = a.x[mv.m1], a.x[mv.m2]
        cols = list(a.y)
        return float(np.dot(d[i2, cols] - d[i1, cols], w[mv.m1] - w[mv.m2]))
    if isinstance(mv, RelocateOrigin):
        cols = list(a.y)
        return float(np.dot(d[mv.door, cols] - d[a.x[mv.m], cols], w[mv.m]))
    if isinstance(mv, SwapDestinations):
        j1, j2 = a.y[mv.n1], a.y[mv.n2]
        rows = list(a.x)
        return float(np.dot(d[rows, j2] - d[rows, j1], w[:, mv.n1] - w[:, mv.n2]))
    rows = list(a.x)
    return float(np.dot(d[rows, mv.door] - d[rows, a.y[mv.n]], w[:, mv.n]))


def apply(a: Assignment, mv: Move) -> Assignment:
    """Return the assignment after ``mv``.  Dimensions are checked loosely; use
    :func:`check_feasible` for a full test against an instance."""
    x, y = list(a.x), list(a.y)
    try:
        if isinstance(mv, SwapOrigins):
            x[mv.m1], x[mv.m2] = x[mv.m2], x[mv.m1]
        elif isinstance(mv, SwapDestinations):
            y[mv.n1], y[mv.n2] = y[mv.n2], y[mv.n1]
        elif isinstance(mv, RelocateOrigin):
            if mv.door in a.x:
                raise MoveError(f"inbound door {mv.door} is already assigned")
            x[mv.m] = mv.door
        elif isinstance(mv, RelocateDestination):
            if mv.door in a.y:
                raise MoveError(f"outbound door {mv.door} is already assigned")
            y[mv.n] = mv.door
        else:
            raise MoveError(f"unknown move {mv!r}")
    except IndexError:
        raise MoveError(f"index out of range in {mv}") from None
    if min(x + y, default=0) < 0:
        raise MoveError(f"negative index in {mv}")
    return Assignment(tuple(x), tuple(y))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_assignment(inst: Instance, seed=None) -> Assignment:
    """Uniformly random injective assignment (a random M-prefix of a door permutation)."""
    rng = _as_rng(seed)
    x = rng.permutation(inst.I)[: inst.M]
    y = rng.permutation(inst.J)[: inst.N]
    return Assignment(tuple(x.tolist()), tuple(y.tolist()))


def moves(inst: Instance, a: Assignment) -> Iterator[Move]:
    """All non-identity moves, in canonical order: origin swaps, destination
    swaps, origin relocations, destination relocations."""
    for m1 in range(inst.M):
        for m2 in range(m1 + 1, inst.M):
            yield SwapOrigins(m1, m2)
    for n1 in range(inst.N):
        for n2 in range(n1 + 1, inst.N):
            yield SwapDestinations(n1, n2)
    used_x, used_y = set(a.x), set(a.y)
    free_x = [i for i in range(inst.I) if i not in used_x]
    free_y = [j for j in range(inst.J) if j not in used_y]
    for m in range(inst.M):
        for door in free_x:
            yield RelocateOrigin(m, door)
    for n in range(inst.N):
        for door in free_y:
            yield RelocateDestination(n, door)


class Neighborhood:
    """Every move delta of one assignment, computed with a few matrix products.

    ``deltas`` is ordered exactly like :func:`moves`; ``move(k)`` rebuilds the
    k-th move.  Local search uses this instead of calling
    :func:`evaluate_move_delta` once per move.
    """

    def __init__(self, inst: Instance, a: Assignment):
        self.assignment = a
        d = inst.distance
        w = inst.flow.astype(np.float64)
        x, y = np.asarray(a.x), np.asarray(a.y)
        M, N = inst.M, inst.N
        used_x = np.zeros(inst.I, dtype=bool)
        used_x[x] = True
        used_y = np.zeros(inst.J, dtype=bool)
        used_y[y] = True
        self.free_x = np.flatnonzero(~used_x)
        self.free_y = np.flatnonzero(~used_y)

        dxy = d[np.ix_(x, y)]                       # M x N: door distance per (m, n)
        g = dxy @ w.T                               # g[a, b] = sum_n dxy[a, n] w[b, n]
        gd = np.diag(g)
        self.ox1, self.ox2 = np.triu_indices(M, k=1)
        swap_o = g[self.ox1, self.ox2] + g[self.ox2, self.ox1] - gd[self.ox1] - gd[self.ox2]

        h = dxy.T @ w                               # h[a, b] = sum_m dxy[m, a] w[m, b]
        hd = np.diag(h)
        self.dy1, self.dy2 = np.triu_indices(N, k=1)
        swap_d = h[self.dy1, self.dy2] + h[self.dy2, self.dy1] - hd[self.dy1] - hd[self.dy2]

        reloc_o = (w @ d[np.ix_(self.free_x, y)].T) - gd[:, None]   # M x |free_x|
        reloc_d = (d[np.ix_(x, self.free_y)].T @ w).T - hd[:, None]  # N x |free_y|

        self.deltas = np.concatenate([swap_o, swap_d, reloc_o.ravel(), reloc_d.ravel()])
        self._bounds = np.cumsum([len(swap_o), len(swap_d), reloc_o.size])

    def __len__(self):
        return len(self.deltas)

    def move(self, k: int) -> Move:
        b0, b1, b2 = self._bounds
        if k < b0:
            return SwapOrigins(int(self.ox1[k]), int(self.ox2[k]))
        if k < b1:
            k -= b0
            return SwapDestinations(int(self.dy1[k]), int(self.dy2[k]))
        if k < b2:
            k -= b1
            m, r = divmod(k, len(self.free_x))
            return RelocateOrigin(int(m), int(self.free_x[r]))
        k -= b2
        n, r = divmod(k, len(self.free_y))
        return RelocateDestination(int(n), int(self.free_y[r]))


# ---------------------------------------------------------------------------
# "X: 1 2 3" / "Y: 4 5" text format, 1-based door numbers

_ASSIGN_LINE = re.compile(r"\s*([XY])\s*:(.*)\Z")


def format_assignment(a: Assignment) -> str:
    return ("X: " + " ".join(str(i + 1) for i in a.x) + "\n"
            + "Y: " + " ".join(str(j + 1) for j in a.y) + "\n")


def parse_assignment(text: str, inst: Instance | None = None) -> Assignment:
    found: dict[str, tuple[int, ...]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        match = _ASSIGN_LINE.match(body)
        if not match:
            raise ParseError(f"expected 'X:' or 'Y:' line, got {body!r}", lineno)
        side, rest = match.groups()
        if side in found:
            raise ParseError(f"duplicate {side}: line", lineno)
        try:
            doors = tuple(int(t) - 1 for t in rest.split())
        except ValueError:
            raise ParseError(f"door numbers must be integers in {body!r}", lineno) from None
        found[side] = doors
    if set(found) != {"X", "Y"}:
        raise ParseError("assignment needs both an X: and a Y: line")
    a = Assignment(found["X"], found["Y"])
    if inst is not None:
        try:
            check_feasible(inst, a)
        except FeasibilityError as exc:
            raise ParseError(f"assignment infeasible: {exc}") from None
    return a
