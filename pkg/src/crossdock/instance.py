"""Crossdock door assignment instances.

An :class:`Instance` bundles the door counts, the inbound-to-outbound door
distance matrix ``distance`` (I x J, reals) and the origin-to-destination
trip matrix ``flow`` (M x N, integers).  Instances are immutable: both
arrays are stored read-only.

Instances come from three places: :func:`generate_random`,
:func:`generate_from_layout` (rectilinear distances on a rectangular dock,
see :class:`LayoutSpec`) and the ``CDAP`` text format handled by
:func:`read_instance` / :func:`write_instance`::

    CDAP 1
    I J M N
    <I lines of J reals>        # distance rows
    <M lines of N integers>     # flow rows
"""
from __future__ import annotations

import hashlib
import io
import re
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

__all__ = [
    "Instance",
    "LayoutSpec",
    "InstanceError",
    "ParseError",
    "generate_random",
    "generate_from_layout",
    "door_positions",
    "figure1_layout",
    "figure1_instance",
    "read_instance",
    "write_instance",
    "read_instance_file",
    "write_instance_file",
]

FORMAT_MAGIC = "CDAP"
FORMAT_VERSION = "1"

WALLS = ("south", "north", "west", "east")


class InstanceError(ValueError):
    """Invalid instance data or generator arguments."""


class ParseError(ValueError):
    """Malformed CDAP text; ``lineno`` is 1-based (0 when unknown)."""

    def __init__(self, message: str, lineno: int = 0):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno else message)


@dataclass(frozen=True, eq=False)
class Instance:
    num_inbound_doors: int
    num_outbound_doors: int
    num_origins: int
    num_destinations: int
    distance: np.ndarray
    flow: np.ndarray
    name: str = field(default="", compare=False)

    def __post_init__(self):
        for label, value in (("I", self.num_inbound_doors), ("J", self.num_outbound_doors),
                             ("M", self.num_origins), ("N", self.num_destinations)):
            if int(value) != value or value < 1:
                raise InstanceError(f"{label} must be a positive integer, got {value!r}")
        _check_dims(self.num_inbound_doors, self.num_outbound_doors,
                    self.num_origins, self.num_destinations)

        d = np.array(self.distance, dtype=np.float64)
        if d.shape != (self.num_inbound_doors, self.num_outbound_doors):
            raise InstanceError(
                f"distance matrix has shape {d.shape}, expected "
                f"({self.num_inbound_doors}, {self.num_outbound_doors})")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise InstanceError("distances must be finite and non-negative")

        raw_w = np.asarray(self.flow)
        if raw_w.dtype.kind == "f":
            if not np.all(np.isfinite(raw_w)) or np.any(raw_w != np.round(raw_w)):
                raise InstanceError("flow must be integer")
        elif raw_w.dtype.kind not in "iub":
            raise InstanceError("flow must be integer")
        w = raw_w.astype(np.int64)
        if w.shape != (self.num_origins, self.num_destinations):
            raise InstanceError(
                f"flow matrix has shape {w.shape}, expected "
                f"({self.num_origins}, {self.num_destinations})")
        if np.any(w < 0):
            raise InstanceError("flows must be non-negative")

        d.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "distance", d)
        object.__setattr__(self, "flow", w)

    # short aliases used throughout the numeric code
    @property
    def I(self) -> int:  # noqa: E743
        return self.num_inbound_doors

    @property
    def J(self) -> int:
        return self.num_outbound_doors

    @property
    def M(self) -> int:
        return self.num_origins

    @property
    def N(self) -> int:
        return self.num_destinations

    @property
    def degenerate(self) -> bool:
        """True when every flow is zero, so all assignments cost nothing."""
        return not bool(np.any(self.flow > 0))

    def scaled(self, factor: float) -> "Instance":
        """Copy with every distance multiplied by ``factor``."""
        if factor <= 0:
            raise InstanceError("scale factor must be positive")
        return Instance(self.I, self.J, self.M, self.N,
                        self.distance * factor, self.flow, name=self.name)

    def checksum(self) -> str:
        return hashlib.sha256(write_instance(self).encode("ascii")).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (self.dims == other.dims
                and np.array_equal(self.distance, other.distance)
                and np.array_equal(self.flow, other.flow))

    def __hash__(self):
        return hash((self.dims, self.distance.tobytes(), self.flow.tobytes()))

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.I, self.J, self.M, self.N)

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"<Instance{tag} I={self.I} J={self.J} M={self.M} N={self.N}>"


def _check_dims(I: int, J: int, M: int, N: int) -> None:
    if I < M:
        raise InstanceError(f"I ≥ M violated (I={I}, M={M})")
    if J < N:
        raise InstanceError(f"J ≥ N violated (J={J}, N={N})")


def generate_random(I: int, J: int, M: int, N: int, max_distance: float = 10.0,
                    max_flow: int = 5, seed: int = 0) -> Instance:
    """Uniform random instance.

    Distances are drawn from ``U[1, max_distance]`` and flows from
    ``{0, ..., max_flow}``.  The same arguments always give the same instance.
    """
    for label, value in (("I", I), ("J", J), ("M", M), ("N", N)):
        if value < 1:
            raise InstanceError(f"{label} must be ≥ 1, got {value}")
    _check_dims(I, J, M, N)
    if not max_distance > 0:
        raise InstanceError("max_distance must be > 0")
    if max_flow < 1:
        raise InstanceError("max_flow must be ≥ 1")
    rng = np.random.default_rng(seed)
    d = rng.uniform(1.0, max_distance, size=(I, J)) if max_distance > 1 else np.full((I, J), float(max_distance))
    w = rng.integers(0, max_flow + 1, size=(M, N))
    return Instance(I, J, M, N, d, w, name=f"random-{I}x{J}-{M}x{N}-s{seed}")


@dataclass(frozen=True)
class LayoutSpec:
    """Rectangular dock with doors spaced ``door_pitch`` apart along its walls.

    The long walls are ``south`` (y = 0) and ``north`` (y = dock_width);
    door ``k`` on a long wall sits at x = (k + 0.5) * door_pitch.  The short
    walls ``west`` (x = 0) and ``east`` (x = dock length) put door ``k`` at
    y = (k + 0.5) * door_pitch.  Dock length is the pitch times the number of
    doors on the busier long wall.  Within a wall, inbound doors come first,
    then outbound doors, then open doors.  Open doors take up a slot but are
    never assigned.
    """

    inbound_doors: int
    outbound_doors: int
    open_doors: int = 0
    dock_width: float = 3.0
    door_pitch: float = 1.0
    inbound_wall: str = "south"
    outbound_wall: str = "north"
    open_wall: str = "north"

    def __post_init__(self):
        if self.inbound_doors < 1 or self.outbound_doors < 1 or self.open_doors < 0:
            raise InstanceError("layout needs ≥ 1 inbound and ≥ 1 outbound door")
        if not (self.dock_width > 0 and self.door_pitch > 0):
            raise InstanceError("dock_width and door_pitch must be positive")
        for wall in (self.inbound_wall, self.outbound_wall, self.open_wall):
            if wall not in WALLS:
                raise InstanceError(f"unknown wall {wall!r}; expected one of {WALLS}")

    @property
    def total_doors(self) -> int:
        return self.inbound_doors + self.outbound_doors + self.open_doors


def door_positions(layout: LayoutSpec) -> dict[str, np.ndarray]:
    """Door centre coordinates as ``{"inbound": (I,2), "outbound": (J,2), "open": (K,2)}``."""
    groups = (("inbound", layout.inbound_wall, layout.inbound_doors),
              ("outbound", layout.outbound_wall, layout.outbound_doors),
              ("open", layout.open_wall, layout.open_doors))
    slots: dict[str, int] = {wall: 0 for wall in WALLS}
    per_wall = {wall: sum(n for _, w, n in groups if w == wall) for wall in WALLS}
    length = layout.door_pitch * max(per_wall["south"], per_wall["north"], 1)
    for wall in ("west", "east"):
        if per_wall[wall] * layout.door_pitch > layout.dock_width:
            raise InstanceError(f"{per_wall[wall]} doors do not fit on the {wall} wall")

    out = {}
    for kind, wall, count in groups:
        coords = []
        for _ in range(count):
            offset = (slots[wall] + 0.5) * layout.door_pitch
            slots[wall] += 1
            if wall == "south":
                coords.append((offset, 0.0))
            elif wall == "north":
                coords.append((offset, layout.dock_width))
            elif wall == "west":
                coords.append((0.0, offset))
            else:
                coords.append((length, offset))
        out[kind] = np.array(coords, dtype=np.float64).reshape(count, 2)

    allpos = np.vstack([out["inbound"], out["outbound"], out["open"]])
    if len({tuple(p) for p in allpos}) != len(allpos):
        raise InstanceError("door positions collide")
    return out


def generate_from_layout(layout: LayoutSpec, M: int, N: int, flow_seed: int = 0,
                         max_flow: int = 5) -> Instance:
    """Instance whose distances are rectilinear distances between door centres."""
    if M > layout.inbound_doors:
        raise InstanceError(f"I ≥ M violated: layout has {layout.inbound_doors} inbound doors, M={M}")
    if N > layout.outbound_doors:
        raise InstanceError(f"J ≥ N violated: layout has {layout.outbound_doors} outbound doors, N={N}")
    if M < 1 or N < 1:
        raise InstanceError("M and N must be ≥ 1")
    if max_flow < 1:
        raise InstanceError("max_flow must be ≥ 1")
    pos = door_positions(layout)
    inb, outb = pos["inbound"], pos["outbound"]
    d = np.abs(inb[:, None, :] - outb[None, :, :]).sum(axis=2)
    rng = np.random.default_rng(flow_seed)
    w = rng.integers(0, max_flow + 1, size=(M, N))
    return Instance(layout.inbound_doors, layout.outbound_doors, M, N, d, w,
                    name=f"layout-{layout.inbound_doors}x{layout.outbound_doors}-s{flow_seed}")


# Figure-1 dock: 6 strip (inbound), 9 stack (outbound), 1 open door.
# Width 3 and pitch 1 are a labelling convention, not measured data.
FIGURE1_WIDTH = 3.0
FIGURE1_PITCH = 1.0


def figure1_layout() -> LayoutSpec:
    return LayoutSpec(inbound_doors=6, outbound_doors=9, open_doors=1,
                      dock_width=FIGURE1_WIDTH, door_pitch=FIGURE1_PITCH)


def figure1_instance(flow_seed: int = 1, max_flow: int = 5) -> Instance:
    inst = generate_from_layout(figure1_layout(), M=6, N=9, flow_seed=flow_seed, max_flow=max_flow)
    return Instance(inst.I, inst.J, inst.M, inst.N, inst.distance, inst.flow, name="figure1")


# ---------------------------------------------------------------------------
# CDAP text format

_INT_RE = re.compile(r"[+-]?\d+\Z")


def _format_real(value: float) -> str:
    return format(float(value), ".17g")


def write_instance(inst: Instance, stream: IO[str] | None = None) -> str:
    """Serialise to CDAP text; also written to ``stream`` when given."""
    lines = [f"{FORMAT_MAGIC} {FORMAT_VERSION}", f"{inst.I} {inst.J} {inst.M} {inst.N}"]
    lines += [" ".join(_format_real(v) for v in row) for row in inst.distance]
    lines += [" ".join(str(int(v)) for v in row) for row in inst.flow]
    text = "\n".join(lines) + "\n"
    if stream is not None:
        stream.write(text)
    return text


def _tokens(lines: Iterable[str]):
    for lineno, raw in enumerate(lines, start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            yield lineno, body.split()


def read_instance(stream: IO[str] | str) -> Instance:
    """Parse CDAP text from a stream or a string."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    rows = _tokens(stream)

    def next_row(what: str):
        try:
            return next(rows)
        except StopIteration:
            raise ParseError(f"unexpected end of file, expected {what}") from None

    lineno, toks = next_row("header")
    if toks[0] != FORMAT_MAGIC:
        raise ParseError(f"bad magic {toks[0]!r}, expected {FORMAT_MAGIC!r}", lineno)
    if len(toks) != 2 or toks[1] != FORMAT_VERSION:
        raise ParseError(f"unsupported header {' '.join(toks)!r}, expected "
                         f"'{FORMAT_MAGIC} {FORMAT_VERSION}'", lineno)

    lineno, toks = next_row("dimensions")
    if len(toks) != 4 or not all(_INT_RE.match(t) for t in toks):
        raise ParseError("dimension line must hold four integers I J M N", lineno)
    I, J, M, N = (int(t) for t in toks)
    if min(I, J, M, N) < 1:
        raise ParseError("dimensions must be positive", lineno)
    try:
        _check_dims(I, J, M, N)
    except InstanceError as exc:
        raise ParseError(str(exc), lineno) from None

    d = np.empty((I, J))
    for i in range(I):
        lineno, toks = next_row(f"distance row {i + 1}")
        if len(toks) != J:
            raise ParseError(f"distance row {i + 1} has {len(toks)} entries, expected {J}", lineno)
        for j, tok in enumerate(toks):
            try:
                v = float(tok)
            except ValueError:
                raise ParseError(f"distance {tok!r} is not a real number", lineno) from None
            if not np.isfinite(v) or v < 0:
                raise ParseError(f"distance {tok!r} must be finite and non-negative", lineno)
            d[i, j] = v

    w = np.empty((M, N), dtype=np.int64)
    for m in range(M):
        lineno, toks = next_row(f"flow row {m + 1}")
        if len(toks) != N:
            raise ParseError(f"flow row {m + 1} has {len(toks)} entries, expected {N}", lineno)
        for n, tok in enumerate(toks):
            if not _INT_RE.match(tok):
                raise ParseError(f"flow must be integer, got {tok!r}", lineno)
            v = int(tok)
            if v < 0:
                raise ParseError(f"flow {tok!r} must be non-negative", lineno)
            w[m, n] = v

    extra = next(rows, None)
    if extra is not None:
        raise ParseError("trailing data after flow matrix", extra[0])
    return Instance(I, J, M, N, d, w)


def read_instance_file(path) -> Instance:
    with open(path, encoding="ascii") as fh:
        return read_instance(fh)


def write_instance_file(inst: Instance, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        write_instance(inst, fh)
