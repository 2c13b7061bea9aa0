"""Discrete-event simulation of freight moving through the crossdock.

Trailers arrive and queue FIFO for an inbound door.  Unloading a trailer
from origin m spawns forklift trips to the outbound doors of the
destinations it ships to.  A shared forklift pool serves trips FIFO.  Each
trip covers the door-to-door distance loaded and then returns empty.  The
run yields total travel, trailer waiting time, and the priced combination
``refined_cost = travel + delay_weight * waiting``.

Every random quantity is drawn from a stream keyed to the trailer (origin
and sequence number) and to the purpose of the draw, never to the order in
which the simulation asks for it.  Two assignments simulated with the same
seed therefore see identical arrivals and unload times (common random
numbers).
"""
from __future__ import annotations

import heapq
import math
import re
import statistics
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .instance import Instance, InstanceError, ParseError
from .kvconfig import coerce, parse_kv
from .objective import Assignment, check_feasible

__all__ = [
    "UnloadTime",
    "SimConfig",
    "SimResult",
    "CostEstimate",
    "simulate",
    "estimate_cost",
    "replication_seed",
    "parse_schedule",
    "SIM_RESULT_COLUMNS",
]

# event kinds, in tie-break priority order
DOOR_RELEASED = 0
TRAILER_ARRIVAL = 1
UNLOAD_COMPLETE = 2
TRIP_COMPLETE = 3
EVENT_NAMES = ("DoorReleased", "TrailerArrival", "UnloadComplete", "TripComplete")

_ARRIVAL_STREAM = 0
_UNLOAD_STREAM = 1

_DIST_RE = re.compile(r"\s*(constant|uniform|exponential)\s*\(([^)]*)\)\s*\Z")


@dataclass(frozen=True)
class UnloadTime:
    """Unload duration: ``constant(c)``, ``uniform(a,b)`` or ``exponential(mean)``."""

    kind: str = "constant"
    params: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        arity = {"constant": 1, "uniform": 2, "exponential": 1}
        if self.kind not in arity:
            raise InstanceError(f"unknown unload distribution {self.kind!r}")
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        if len(params) != arity[self.kind]:
            raise InstanceError(f"{self.kind} takes {arity[self.kind]} parameter(s)")
        if self.kind == "uniform" and not 0 < params[0] <= params[1]:
            raise InstanceError("uniform(a,b) needs 0 < a <= b")
        if self.kind != "uniform" and not params[0] > 0:
            raise InstanceError(f"{self.kind} parameter must be positive")

    @classmethod
    def parse(cls, text: str) -> "UnloadTime":
        match = _DIST_RE.match(text)
        if not match:
            raise InstanceError(f"cannot parse unload time {text!r}")
        kind, args = match.groups()
        try:
            params = tuple(float(t) for t in args.split(",") if t.strip())
        except ValueError:
            raise InstanceError(f"cannot parse unload time {text!r}") from None
        return cls(kind, params)

    @property
    def random(self) -> bool:
        return self.kind != "constant"

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(size, self.params[0])
        if self.kind == "uniform":
            return rng.uniform(self.params[0], self.params[1], size=size)
        return rng.exponential(self.params[0], size=size)

    def __str__(self):
        return f"{self.kind}({','.join(repr(p) for p in self.params)})"


@dataclass(frozen=True)
class SimConfig:
    """Scenario parameters.

    ``schedule``, when given, is a tuple of ``(origin, arrival_time)`` pairs
    with 0-based origins and replaces the Poisson arrivals.  Otherwise each
    origin sends ``trailers_per_origin`` trailers with exponential
    inter-arrival times at ``arrival_rate`` (a scalar or one rate per
    origin).
    """

    arrival_rate: float | tuple[float, ...] = 0.5
    trailers_per_origin: int = 5
    schedule: tuple[tuple[int, float], ...] | None = None
    unload_time: UnloadTime = field(default_factory=lambda: UnloadTime("exponential", (2.0,)))
    forklift_count: int = 2
    forklift_speed: float = 1.0
    trip_rule: str = "full_row"
    delay_weight: float = 1.0
    outbound_service_time: float = 0.0
    door_policy: str = "dedicated"
    hold_door_until_cleared: bool = False
    seed: int = 0

    def __post_init__(self):
        rates = self.arrival_rate if isinstance(self.arrival_rate, tuple) else (self.arrival_rate,)
        if not rates or any(not r > 0 for r in rates):
            raise InstanceError("arrival rates must be positive")
        if self.trailers_per_origin < 1:
            raise InstanceError("trailers_per_origin must be ≥ 1")
        if self.schedule is not None:
            sched = tuple((int(m), float(t)) for m, t in self.schedule)
            if any(m < 0 or not t >= 0 or not math.isfinite(t) for m, t in sched):
                raise InstanceError("schedule needs origins ≥ 0 and finite times ≥ 0")
            object.__setattr__(self, "schedule", sched)
        if isinstance(self.unload_time, str):
            object.__setattr__(self, "unload_time", UnloadTime.parse(self.unload_time))
        if self.forklift_count < 1:
            raise InstanceError("forklift_count must be ≥ 1")
        if not self.forklift_speed > 0:
            raise InstanceError("forklift_speed must be positive")
        if self.trip_rule not in ("full_row", "proportional"):
            raise InstanceError("trip_rule must be 'full_row' or 'proportional'")
        if not self.delay_weight >= 0:
            raise InstanceError("delay_weight must be non-negative")
        if not self.outbound_service_time >= 0:
            raise InstanceError("outbound_service_time must be non-negative")
        if self.door_policy not in ("dedicated", "pooled"):
            raise InstanceError("door_policy must be 'dedicated' or 'pooled'")
        if self.seed < 0:
            raise InstanceError("seed must be non-negative")

    @property
    def deterministic(self) -> bool:
        """True when no draw is random (explicit schedule and constant unload time)."""
        return self.schedule is not None and not self.unload_time.random

    def rate_for(self, origin: int) -> float:
        if isinstance(self.arrival_rate, tuple):
            if len(self.arrival_rate) == 1:
                return self.arrival_rate[0]
            return self.arrival_rate[origin]
        return self.arrival_rate

    # key=value surface -----------------------------------------------------
    _KV_KEYS = {
        "arrival_rate", "trailers_per_origin", "schedule", "schedule_file", "unload_time",
        "forklift_count", "forklift_speed", "trip_rule", "delay_weight",
        "outbound_service_time", "door_policy", "hold_door_until_cleared", "sim_seed",
    }

    @classmethod
    def from_kv(cls, values, base: "SimConfig | None" = None, root: Path | None = None) -> "SimConfig":
        """Build from :func:`~crossdock.kvconfig.parse_kv` output.  The config's
        ``seed`` is read from the ``sim_seed`` key."""
        base = base or cls()
        kw = {}
        simple = {"trailers_per_origin": int, "forklift_count": int, "forklift_speed": float,
                  "trip_rule": str, "delay_weight": float, "outbound_service_time": float,
                  "door_policy": str, "hold_door_until_cleared": bool}
        for key, kind in simple.items():
            if key in values:
                kw[key] = coerce(values[key][0], kind, key, values[key][1])
        if "sim_seed" in values:
            kw["seed"] = coerce(values["sim_seed"][0], int, "sim_seed", values["sim_seed"][1])
        if "arrival_rate" in values:
            raw, lineno = values["arrival_rate"]
            rates = tuple(coerce(t.strip(), float, "arrival_rate", lineno) for t in raw.split(","))
            kw["arrival_rate"] = rates[0] if len(rates) == 1 else rates
        if "unload_time" in values:
            kw["unload_time"] = UnloadTime.parse(values["unload_time"][0])
        if "schedule" in values:
            raw, lineno = values["schedule"]
            kw["schedule"] = _parse_inline_schedule(raw, lineno)
        if "schedule_file" in values:
            raw, _ = values["schedule_file"]
            path = Path(raw)
            if root is not None and not path.is_absolute():
                path = root / path
            kw["schedule"] = parse_schedule(path.read_text(encoding="ascii"))
        return replace(base, **kw)

    def to_record(self) -> dict:
        rec = {
            "arrival_rate": self.arrival_rate,
            "trailers_per_origin": self.trailers_per_origin,
            "schedule": _format_inline_schedule(self.schedule) if self.schedule is not None else "",
            "unload_time": str(self.unload_time),
            "forklift_count": self.forklift_count,
            "forklift_speed": self.forklift_speed,
            "trip_rule": self.trip_rule,
            "delay_weight": self.delay_weight,
            "outbound_service_time": self.outbound_service_time,
            "door_policy": self.door_policy,
            "hold_door_until_cleared": self.hold_door_until_cleared,
            "sim_seed": self.seed,
        }
        if self.schedule is None:
            del rec["schedule"]
        return rec


def parse_schedule(text: str) -> tuple[tuple[int, float], ...]:
    """Lines ``origin_index arrival_time`` with 1-based origin numbers."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        toks = body.split()
        if len(toks) != 2:
            raise ParseError("schedule line needs 'origin_index arrival_time'", lineno)
        try:
            origin, t = int(toks[0]), float(toks[1])
        except ValueError:
            raise ParseError(f"cannot read schedule line {body!r}", lineno) from None
        if origin < 1 or not t >= 0:
            raise ParseError("origin index must be ≥ 1 and time ≥ 0", lineno)
        out.append((origin - 1, t))
    return tuple(out)


def _parse_inline_schedule(raw: str, lineno: int) -> tuple[tuple[int, float], ...]:
    out = []
    for tok in filter(None, (t.strip() for t in raw.split(","))):
        try:
            origin, t = tok.split("@")
            out.append((int(origin) - 1, float(t)))
        except ValueError:
            raise ParseError(f"schedule entries look like origin@time, got {tok!r}", lineno) from None
    return tuple(out)


def _format_inline_schedule(schedule) -> str:
    return ",".join(f"{m + 1}@{t!r}" for m, t in schedule)


SIM_RESULT_COLUMNS = (
    "refined_cost",
    "total_travel_distance",
    "loaded_travel_distance",
    "total_trips",
    "total_trailer_waiting_time",
    "makespan",
    "num_trailers",
    "door_busy_time",
)


@dataclass(frozen=True)
class SimResult:
    total_travel_distance: float
    loaded_travel_distance: float
    total_trips: int
    total_trailer_waiting_time: float
    makespan: float
    door_busy_time: tuple[float, ...]
    refined_cost: float
    num_trailers: int
    arrivals: tuple[tuple[int, int, float], ...] = field(default=(), repr=False)
    trace: tuple[tuple[float, str, tuple], ...] = field(default=(), repr=False)

    def to_record(self) -> dict:
        return {
            "refined_cost": self.refined_cost,
            "total_travel_distance": self.total_travel_distance,
            "loaded_travel_distance": self.loaded_travel_distance,
            "total_trips": self.total_trips,
            "total_trailer_waiting_time": self.total_trailer_waiting_time,
            "makespan": self.makespan,
            "num_trailers": self.num_trailers,
            # door_busy_time is ';'-joined so the CSV row stays flat
            "door_busy_time": ";".join(repr(v) for v in self.door_busy_time),
        }

    def csv_row(self) -> str:
        rec = self.to_record()
        return ",".join(repr(rec[c]) if isinstance(rec[c], float) else str(rec[c])
                        for c in SIM_RESULT_COLUMNS)


@dataclass
class _Trailer:
    origin: int
    seq: int
    arrival: float
    unload: float
    trips: list
    door: int = -1
    outstanding: int = 0


def _build_trailers(inst: Instance, cfg: SimConfig, rep_seed: int) -> list[_Trailer]:
    if cfg.schedule is not None:
        per_origin: dict[int, list[float]] = {}
        for origin, t in cfg.schedule:
            if origin >= inst.M:
                raise InstanceError(f"schedule names origin {origin + 1} but M = {inst.M}")
            per_origin.setdefault(origin, []).append(t)
        arrivals = {m: np.array(ts) for m, ts in per_origin.items()}
    else:
        if isinstance(cfg.arrival_rate, tuple) and len(cfg.arrival_rate) not in (1, inst.M):
            raise InstanceError(f"arrival_rate lists {len(cfg.arrival_rate)} rates for M = {inst.M}")
        arrivals = {}
        for m in range(inst.M):
            rng = np.random.default_rng([rep_seed, _ARRIVAL_STREAM, m])
            gaps = rng.exponential(1.0 / cfg.rate_for(m), size=cfg.trailers_per_origin)
            arrivals[m] = np.cumsum(gaps)

    trailers = []
    for m in sorted(arrivals):
        times = arrivals[m]
        rng = np.random.default_rng([rep_seed, _UNLOAD_STREAM, m])
        unloads = cfg.unload_time.sample(rng, len(times))
        count = len(times)
        row = inst.flow[m]
        for k, (t, u) in enumerate(zip(times.tolist(), unloads.tolist())):
            if cfg.trip_rule == "full_row":
                per_dest = row
            else:
                per_dest = (row * (k + 1)) // count - (row * k) // count
            trips = [int(n) for n in np.flatnonzero(per_dest) for _ in range(int(per_dest[n]))]
            trailers.append(_Trailer(m, k, float(t), float(u), trips))
    return trailers


def simulate(inst: Instance, a: Assignment, cfg: SimConfig, replication_seed: int = 0,
             trace: bool = False) -> SimResult:
    """Run one replication to completion.  Deterministic in all arguments."""
    check_feasible(inst, a)
    if replication_seed < 0:
        raise ValueError("replication_seed must be non-negative")
    trailers = _build_trailers(inst, cfg, replication_seed)
    d = inst.distance

    heap: list = []
    seq = 0
    now = 0.0
    log = [] if trace else None

    def push(t, kind, payload):
        nonlocal seq
        if t < now:
            raise RuntimeError("event scheduled in the past")
        heapq.heappush(heap, (t, kind, seq, payload))
        seq += 1

    for tid, tr in enumerate(trailers):
        push(tr.arrival, TRAILER_ARRIVAL, tid)

    dedicated = cfg.door_policy == "dedicated"
    assigned_doors = sorted(a.x)
    door_free = {door: True for door in assigned_doors}
    door_since = {door: 0.0 for door in assigned_doors}
    busy = np.zeros(inst.I)
    queues = {m: deque() for m in range(inst.M)} if dedicated else None
    shared_queue: deque = deque()

    idle_forklifts = cfg.forklift_count
    trip_queue: deque = deque()
    loaded: list[float] = []
    waits: list[float] = []

    def start_unload(tid, door):
        tr = trailers[tid]
        tr.door = door
        door_free[door] = False
        door_since[door] = now
        waits.append(now - tr.arrival)
        push(now + tr.unload, UNLOAD_COMPLETE, tid)

    def fill_doors():
        if dedicated:
            for m, q in queues.items():
                if q and door_free[a.x[m]]:
                    start_unload(q.popleft(), a.x[m])
            return
        while shared_queue:
            tid = shared_queue[0]
            own = a.x[trailers[tid].origin]
            if door_free[own]:
                door = own
            else:
                free = [door for door in assigned_doors if door_free[door]]
                if not free:
                    return
                door = free[0]
            shared_queue.popleft()
            start_unload(tid, door)

    def dispatch():
        nonlocal idle_forklifts
        while idle_forklifts and trip_queue:
            tid, n = trip_queue.popleft()
            dist = float(d[trailers[tid].door, a.y[n]])
            idle_forklifts -= 1
            push(now + 2.0 * dist / cfg.forklift_speed + cfg.outbound_service_time,
                 TRIP_COMPLETE, (tid, n, dist))

    while heap:
        t, kind, _, payload = heapq.heappop(heap)
        if t < now:
            raise RuntimeError("event causality violated")
        now = t
        if log is not None:
            log.append((t, EVENT_NAMES[kind], payload if isinstance(payload, tuple) else (payload,)))

        if kind == TRAILER_ARRIVAL:
            tr = trailers[payload]
            (queues[tr.origin] if dedicated else shared_queue).append(payload)
            fill_doors()
        elif kind == UNLOAD_COMPLETE:
            tr = trailers[payload]
            tr.outstanding = len(tr.trips)
            trip_queue.extend((payload, n) for n in tr.trips)
            if not (cfg.hold_door_until_cleared and tr.trips):
                push(now, DOOR_RELEASED, tr.door)
            dispatch()
        elif kind == TRIP_COMPLETE:
            tid, n, dist = payload
            idle_forklifts += 1
            loaded.append(dist)
            tr = trailers[tid]
            tr.outstanding -= 1
            if cfg.hold_door_until_cleared and tr.outstanding == 0:
                push(now, DOOR_RELEASED, tr.door)
            dispatch()
        else:  # DOOR_RELEASED
            door = payload
            busy[door] += now - door_since[door]
            door_free[door] = True
            fill_doors()

    loaded_total = math.fsum(loaded)
    travel = 2.0 * loaded_total
    waiting = math.fsum(waits)
    return SimResult(
        total_travel_distance=travel,
        loaded_travel_distance=loaded_total,
        total_trips=len(loaded),
        total_trailer_waiting_time=waiting,
        makespan=now,
        door_busy_time=tuple(busy.tolist()),
        refined_cost=travel + cfg.delay_weight * waiting,
        num_trailers=len(trailers),
        arrivals=tuple((tr.origin, tr.seq, tr.arrival) for tr in trailers),
        trace=tuple(log) if log is not None else (),
    )


def replication_seed(master_seed: int, r: int) -> int:
    """Seed of replication ``r``, derived by hashing ``(master_seed, r)``."""
    return int(np.random.SeedSequence([master_seed, r]).generate_state(1, np.uint64)[0])


class CostEstimate(NamedTuple):
    mean: float
    std: float
    values: tuple[float, ...]
    results: tuple[SimResult, ...] = ()

    @property
    def stderr(self) -> float:
        return self.std / math.sqrt(len(self.values))


def estimate_cost(inst: Instance, a: Assignment, cfg: SimConfig, replications: int,
                  master_seed: int | None = None, threads: int = 1,
                  keep_results: bool = False) -> CostEstimate:
    """Sample mean and standard deviation of ``refined_cost`` over replications.

    With one replication the deviation is reported as 0.  The mean and
    deviation are computed exactly from the replication values, so identical
    values give a deviation of exactly 0.
    """
    if replications < 1:
        raise ValueError("replications must be ≥ 1")
    master = cfg.seed if master_seed is None else master_seed
    seeds = [replication_seed(master, r) for r in range(replications)]
    if threads > 1 and replications > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda s: simulate(inst, a, cfg, s), seeds))
    else:
        results = [simulate(inst, a, cfg, s) for s in seeds]
    values = tuple(res.refined_cost for res in results)
    mean = statistics.mean(values)
    std = statistics.stdev(values) if replications > 1 else 0.0
    return CostEstimate(float(mean), float(std), values, tuple(results) if keep_results else ())


def sim_config_keys() -> set[str]:
    return set(SimConfig._KV_KEYS)


def load_sim_config(path, base: SimConfig | None = None) -> SimConfig:
    path = Path(path)
    return SimConfig.from_kv(parse_kv(path.read_text(encoding="ascii")), base=base, root=path.parent)

