"""Flat mixed-size netlist model, HPWL, star decomposition and validation.

Coordinates are instance centers. Instances, pins and nets are addressed by
dense integer ids; names only matter at file boundaries.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Array shapes do not match the netlist they are used with."""


class ConstraintError(ValueError):
    """A structural constraint (e.g. a degenerate star) was violated."""


class Kind(enum.IntEnum):
    STD_CELL = 0
    MACRO = 1
    TERMINAL = 2
    STAR = 3  # pseudo star center, zero area

    @property
    def label(self) -> str:
        return _KIND_LABELS[self]


_KIND_LABELS = {
    Kind.STD_CELL: "std-cell",
    Kind.MACRO: "macro",
    Kind.TERMINAL: "terminal",
    Kind.STAR: "pseudo-star-center",
}


@dataclass(frozen=True)
class Rect:
    lx: float
    ly: float
    ux: float
    uy: float

    @property
    def width(self) -> float:
        return self.ux - self.lx

    @property
    def height(self) -> float:
        return self.uy - self.ly

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.lx + self.ux), 0.5 * (self.ly + self.uy))

    def contains(self, x: float, y: float, tol: float = 1e-9) -> bool:
        return (self.lx - tol <= x <= self.ux + tol) and (self.ly - tol <= y <= self.uy + tol)


@dataclass(frozen=True)
class Instance:
    id: int
    name: str
    width: float
    height: float
    kind: Kind = Kind.STD_CELL
    is_sequential: bool = False
    pin_ids: tuple[int, ...] = ()
    fixed_at: tuple[float, float] | None = None  # terminals only

    @property
    def movable(self) -> bool:
        return self.kind != Kind.TERMINAL

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class Pin:
    id: int
    owner: int
    offset_x: float
    offset_y: float
    net: int


@dataclass(frozen=True)
class Net:
    id: int
    pin_ids: tuple[int, ...]
    weight: float = 1.0
    is_pseudo: bool = False
    name: str = ""

    @property
    def degree(self) -> int:
        return len(self.pin_ids)


class Netlist:
    """Immutable indexed netlist plus the core region.

    Array views used by the numeric kernels are built lazily and cached.
    The first pin of every net is taken to be its driver.
    """

    def __init__(
        self,
        instances: Sequence[Instance],
        pins: Sequence[Pin],
        nets: Sequence[Net],
        core: Rect,
        row_height: float = 1.0,
    ) -> None:
        self.instances: tuple[Instance, ...] = tuple(instances)
        self.pins: tuple[Pin, ...] = tuple(pins)
        self.nets: tuple[Net, ...] = tuple(nets)
        self.core = core
        self.row_height = row_height

    def __repr__(self) -> str:
        return (
            f"Netlist({self.num_instances} instances, {self.num_pins} pins, "
            f"{self.num_nets} nets, core={self.core})"
        )

    @property
    def num_instances(self) -> int:
        return len(self.instances)

    @property
    def num_pins(self) -> int:
        return len(self.pins)

    @property
    def num_nets(self) -> int:
        return len(self.nets)

    @cached_property
    def name_to_id(self) -> dict[str, int]:
        return {inst.name: inst.id for inst in self.instances}

    # -- array views -------------------------------------------------------

    @cached_property
    def kind(self) -> np.ndarray:
        return np.array([int(i.kind) for i in self.instances], dtype=np.int8)

    @cached_property
    def movable(self) -> np.ndarray:
        return self.kind != Kind.TERMINAL

    @cached_property
    def movable_ids(self) -> np.ndarray:
        return np.flatnonzero(self.movable)

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.array([(i.width, i.height) for i in self.instances], dtype=np.float64).reshape(-1, 2)

    @cached_property
    def areas(self) -> np.ndarray:
        return self.sizes[:, 0] * self.sizes[:, 1]

    @cached_property
    def is_sequential(self) -> np.ndarray:
        return np.array([i.is_sequential for i in self.instances], dtype=bool)

    @cached_property
    def fixed_xy(self) -> np.ndarray:
        """(n, 2) array with terminal locations; NaN rows for movables."""
        xy = np.full((self.num_instances, 2), np.nan)
        for inst in self.instances:
            if inst.fixed_at is not None:
                xy[inst.id] = inst.fixed_at
        return xy

    @cached_property
    def pin_owner(self) -> np.ndarray:
        return np.array([p.owner for p in self.pins], dtype=np.int64)

    @cached_property
    def pin_net(self) -> np.ndarray:
        return np.array([p.net for p in self.pins], dtype=np.int64)

    @cached_property
    def pin_offsets(self) -> np.ndarray:
        return np.array([(p.offset_x, p.offset_y) for p in self.pins], dtype=np.float64).reshape(-1, 2)

    @cached_property
    def net_weights(self) -> np.ndarray:
        return np.array([n.weight for n in self.nets], dtype=np.float64)

    @cached_property
    def net_is_pseudo(self) -> np.ndarray:
        return np.array([n.is_pseudo for n in self.nets], dtype=bool)

    @cached_property
    def net_degree(self) -> np.ndarray:
        return np.diff(self.net_csr[0])

    @cached_property
    def net_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(start, pins): pins of net e are pins[start[e]:start[e+1]], ascending id."""
        return _csr([sorted(n.pin_ids) for n in self.nets])

    @cached_property
    def inst_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(start, pins): pins of instance v, ascending id."""
        return _csr([sorted(i.pin_ids) for i in self.instances])

    # -- locations ---------------------------------------------------------

    def full_locations(self, locations: np.ndarray) -> np.ndarray:
        """Expand to an (n_instances, 2) array with terminals at their fixed spots.

        Accepts either one row per movable instance or one row per instance
        (terminal rows are then overwritten).
        """
        loc = np.asarray(locations, dtype=np.float64)
        if loc.ndim != 2 or loc.shape[1] != 2:
            raise DimensionError(f"locations must be (n, 2), got {loc.shape}")
        if loc.shape[0] == self.num_instances:
            full = loc.copy()
        elif loc.shape[0] == self.movable_ids.size:
            full = np.empty((self.num_instances, 2))
            full[self.movable_ids] = loc
        else:
            raise DimensionError(
                f"{loc.shape[0]} locations for {self.num_instances} instances "
                f"({self.movable_ids.size} movable)"
            )
        fixed = ~self.movable
        full[fixed] = self.fixed_xy[fixed]
        return full

    def pin_locations(self, locations: np.ndarray) -> np.ndarray:
        full = self.full_locations(locations)
        return full[self.pin_owner] + self.pin_offsets


def _csr(groups: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    start = np.zeros(len(groups) + 1, dtype=np.int64)
    start[1:] = np.cumsum([len(g) for g in groups])
    flat = np.fromiter((p for g in groups for p in g), dtype=np.int64, count=int(start[-1]))
    return start, flat


@dataclass
class NetlistBuilder:
    """Incremental constructor; pins are created as nets are added."""

    core: Rect
    row_height: float = 1.0
    _instances: list[dict] = field(default_factory=list)
    _pins: list[Pin] = field(default_factory=list)
    _nets: list[Net] = field(default_factory=list)
    _names: dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_netlist(cls, netlist: Netlist) -> "NetlistBuilder":
        b = cls(core=netlist.core, row_height=netlist.row_height)
        for inst in netlist.instances:
            b._names[inst.name] = inst.id
            b._instances.append(
                dict(
                    name=inst.name,
                    width=inst.width,
                    height=inst.height,
                    kind=inst.kind,
                    is_sequential=inst.is_sequential,
                    pin_ids=list(inst.pin_ids),
                    fixed_at=inst.fixed_at,
                )
            )
        b._pins = list(netlist.pins)
        b._nets = list(netlist.nets)
        return b

    def add_instance(
        self,
        name: str,
        width: float,
        height: float,
        kind: Kind = Kind.STD_CELL,
        is_sequential: bool = False,
        fixed_at: tuple[float, float] | None = None,
    ) -> int:
        if name in self._names:
            raise ValueError(f"duplicate instance name {name!r}")
        idx = len(self._instances)
        self._names[name] = idx
        self._instances.append(
            dict(
                name=name,
                width=float(width),
                height=float(height),
                kind=Kind(kind),
                is_sequential=is_sequential,
                pin_ids=[],
                fixed_at=None if fixed_at is None else (float(fixed_at[0]), float(fixed_at[1])),
            )
        )
        return idx

    def instance_id(self, name: str) -> int:
        return self._names[name]

    def add_net(
        self,
        connections: Iterable[int | tuple[int, float, float]],
        weight: float = 1.0,
        name: str = "",
        is_pseudo: bool = False,
    ) -> int:
        """Add a net; each connection is an instance id or (id, dx, dy). First is the driver."""
        net_id = len(self._nets)
        pin_ids = []
        for conn in connections:
            if isinstance(conn, tuple):
                owner, dx, dy = conn
            else:
                owner, dx, dy = conn, 0.0, 0.0
            pid = len(self._pins)
            self._pins.append(Pin(pid, int(owner), float(dx), float(dy), net_id))
            self._instances[owner]["pin_ids"].append(pid)
            pin_ids.append(pid)
        self._nets.append(
            Net(net_id, tuple(pin_ids), float(weight), is_pseudo, name or f"n{net_id}")
        )
        return net_id

    def build(self) -> Netlist:
        instances = [
            Instance(i, d["name"], d["width"], d["height"], d["kind"], d["is_sequential"],
                     tuple(d["pin_ids"]), d["fixed_at"])
            for i, d in enumerate(self._instances)
        ]
        return Netlist(instances, self._pins, self._nets, self.core, self.row_height)


# -- operations ------------------------------------------------------------


def hpwl(netlist: Netlist, locations: np.ndarray, include_pseudo: bool = True) -> float:
    """Weighted half-perimeter wirelength; single-pin and empty nets add nothing."""
    per_net = net_hpwl(netlist, locations)
    w = netlist.net_weights
    if not include_pseudo:
        w = np.where(netlist.net_is_pseudo, 0.0, w)
    return float(np.dot(w, per_net))


def net_hpwl(netlist: Netlist, locations: np.ndarray) -> np.ndarray:
    """Unweighted per-net HPWL."""
    pin_xy = netlist.pin_locations(locations)
    start, pins = netlist.net_csr
    out = np.zeros(netlist.num_nets)
    nonempty = np.flatnonzero(np.diff(start) > 0)
    if nonempty.size == 0:
        return out
    xy = pin_xy[pins]
    idx = start[nonempty]
    span = np.maximum.reduceat(xy, idx, axis=0) - np.minimum.reduceat(xy, idx, axis=0)
    out[nonempty] = span.sum(axis=1)
    return out


@dataclass(frozen=True)
class StarFragment:
    """One pseudo star: a zero-area center tied to each member by a two-pin net."""

    members: tuple[int, ...]
    weight: float
    kind: str = "cluster"

    @property
    def num_nets(self) -> int:
        return len(self.members)


def star_decompose(members: Sequence[int], penalty_weight: float, kind: str = "cluster") -> StarFragment:
    members = tuple(int(m) for m in members)
    if len(members) < 2:
        raise ConstraintError(f"a star needs at least 2 members, got {len(members)}")
    if penalty_weight < 0:
        raise ConstraintError("penalty weight must be nonnegative")
    return StarFragment(members, float(penalty_weight), kind)


def apply_stars(
    netlist: Netlist, fragments: Sequence[StarFragment], prefix: str = "__star"
) -> tuple[Netlist, np.ndarray]:
    """Append star centers and their two-pin pseudo nets to a copy of the netlist.

    Returns the augmented netlist and, per appended star, the id of its center.
    Each pseudo net connects a new center pin on the member to the star center.
    """
    b = NetlistBuilder.from_netlist(netlist)
    centers = np.empty(len(fragments), dtype=np.int64)
    for s, frag in enumerate(fragments):
        c = b.add_instance(f"{prefix}{s}", 0.0, 0.0, Kind.STAR)
        centers[s] = c
        for m in frag.members:
            if m >= netlist.num_instances or not netlist.instances[m].movable:
                raise ConstraintError(f"star member {m} is not a movable instance")
            b.add_net([m, c], weight=frag.weight, name=f"{prefix}{s}_{m}", is_pseudo=True)
    return b.build(), centers


def validate(netlist: Netlist) -> list[str]:
    """List violated invariants; an empty list means the netlist is well formed."""
    problems: list[str] = []
    n_inst, n_pins, n_nets = netlist.num_instances, netlist.num_pins, netlist.num_nets

    for k, inst in enumerate(netlist.instances):
        if inst.id != k:
            problems.append(f"instance {inst.name!r} has id {inst.id}, expected {k}")
        if inst.kind in (Kind.STD_CELL, Kind.MACRO) and not (inst.width > 0 and inst.height > 0):
            problems.append(f"movable instance {inst.name!r} has zero area")
        if inst.kind == Kind.STAR and (inst.width != 0 or inst.height != 0):
            problems.append(f"star center {inst.name!r} has nonzero size")
        if inst.kind == Kind.TERMINAL:
            if inst.fixed_at is None:
                problems.append(f"terminal {inst.name!r} has no location")
            elif not netlist.core.contains(*inst.fixed_at):
                problems.append(f"terminal {inst.name!r} at {inst.fixed_at} lies outside the core")
        for pid in inst.pin_ids:
            if not 0 <= pid < n_pins:
                problems.append(f"instance {inst.name!r} lists missing pin {pid}")
            elif netlist.pins[pid].owner != k:
                problems.append(f"pin {pid} listed by {inst.name!r} is owned by {netlist.pins[pid].owner}")

    for k, pin in enumerate(netlist.pins):
        if pin.id != k:
            problems.append(f"pin {k} carries id {pin.id}")
        if not 0 <= pin.owner < n_inst:
            problems.append(f"pin {k} references missing instance {pin.owner}")
            continue
        if not 0 <= pin.net < n_nets:
            problems.append(f"pin {k} references missing net {pin.net}")
            continue
        if k not in netlist.nets[pin.net].pin_ids:
            problems.append(f"pin {k} is not listed by its net {pin.net}")
        owner = netlist.instances[pin.owner]
        if k not in owner.pin_ids:
            problems.append(f"pin {k} is not listed by its owner {owner.name!r}")
        if abs(pin.offset_x) > 0.5 * owner.width + 1e-9 or abs(pin.offset_y) > 0.5 * owner.height + 1e-9:
            problems.append(f"pin {k} offset lies outside {owner.name!r}")

    for k, net in enumerate(netlist.nets):
        if net.id != k:
            problems.append(f"net {k} carries id {net.id}")
        if len(set(net.pin_ids)) != len(net.pin_ids):
            problems.append(f"net {net.name!r} lists a pin twice")
        if net.weight < 0:
            problems.append(f"net {net.name!r} has negative weight")
        for pid in net.pin_ids:
            if not 0 <= pid < n_pins:
                problems.append(f"net {net.name!r} lists missing pin {pid}")
            elif netlist.pins[pid].net != k and 0 <= netlist.pins[pid].net < n_nets:
                # an out-of-range net was already reported from the pin side
                problems.append(f"pin {pid} listed by net {net.name!r} belongs to net {netlist.pins[pid].net}")
    return problems
