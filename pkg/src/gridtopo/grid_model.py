"""Static grid description and topology-vector semantics.

The reference network is a 14-substation dual-busbar grid: 5 generators,
11 loads, 20 lines, 56 attachable objects in total.  Every vector in the
workbench (topology, switch targets, feature blocks) follows one canonical
object ordering: generators by id, loads by id, line origin endpoints by
line id, line extremity endpoints by line id.

A topology vector holds one entry per object: 1 or 2 for the busbar the
object is attached to, -1 for disabled (both endpoints of a line are -1
exactly when the line is out).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

N_SUBSTATIONS = 14
N_LINES = 20
N_GENERATORS = 5
N_LOADS = 11
N_OBJECTS = N_GENERATORS + N_LOADS + 2 * N_LINES  # 56

BUS1 = 1
BUS2 = 2
DISABLED = -1

# object kinds, in canonical block order
GEN = "gen"
LOAD = "load"
LINE_OR = "line_or"
LINE_EX = "line_ex"


class GridConfigError(ValueError):
    """Raised when the grid metadata file is malformed."""


@dataclass(frozen=True)
class Substation:
    id: int
    x: float = 0.0
    y: float = 0.0


@dataclass(frozen=True)
class Line:
    id: int
    from_substation: int
    to_substation: int
    susceptance: float      # p.u.
    thermal_limit: float    # MW-equivalent


@dataclass(frozen=True)
class Generator:
    id: int
    substation: int
    kind: str               # solar | nuclear | wind | thermal


@dataclass(frozen=True)
class Load:
    id: int
    substation: int


@dataclass(frozen=True)
class ObjectRef:
    """One attachable object: a generator, a load, or a line endpoint."""

    kind: str               # GEN | LOAD | LINE_OR | LINE_EX
    id: int                 # generator/load/line id

    @property
    def is_injection(self) -> bool:
        return self.kind in (GEN, LOAD)


@dataclass(frozen=True)
class GridTopology:
    """Immutable grid description plus derived lookup tables."""

    substations: tuple[Substation, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    loads: tuple[Load, ...]

    # derived, filled in __post_init__
    object_order: tuple[ObjectRef, ...] = field(default=(), compare=False)
    object_substation: np.ndarray = field(default=None, compare=False, repr=False)
    gen_index: np.ndarray = field(default=None, compare=False, repr=False)
    load_index: np.ndarray = field(default=None, compare=False, repr=False)
    line_or_index: np.ndarray = field(default=None, compare=False, repr=False)
    line_ex_index: np.ndarray = field(default=None, compare=False, repr=False)
    susceptance: np.ndarray = field(default=None, compare=False, repr=False)
    thermal_limit: np.ndarray = field(default=None, compare=False, repr=False)
    line_from: np.ndarray = field(default=None, compare=False, repr=False)
    line_to: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        order: list[ObjectRef] = []
        order += [ObjectRef(GEN, g.id) for g in self.generators]
        order += [ObjectRef(LOAD, l.id) for l in self.loads]
        order += [ObjectRef(LINE_OR, l.id) for l in self.lines]
        order += [ObjectRef(LINE_EX, l.id) for l in self.lines]

        sub_of = np.empty(len(order), dtype=np.int64)
        for k, obj in enumerate(order):
            sub_of[k] = self._substation_of(obj)

        ng, nl, nli = len(self.generators), len(self.loads), len(self.lines)
        object.__setattr__(self, "object_order", tuple(order))
        object.__setattr__(self, "object_substation", sub_of)
        object.__setattr__(self, "gen_index", np.arange(ng))
        object.__setattr__(self, "load_index", np.arange(ng, ng + nl))
        object.__setattr__(self, "line_or_index", np.arange(ng + nl, ng + nl + nli))
        object.__setattr__(self, "line_ex_index", np.arange(ng + nl + nli, ng + nl + 2 * nli))
        object.__setattr__(self, "susceptance", np.array([l.susceptance for l in self.lines]))
        object.__setattr__(self, "thermal_limit", np.array([l.thermal_limit for l in self.lines]))
        object.__setattr__(self, "line_from", np.array([l.from_substation for l in self.lines]))
        object.__setattr__(self, "line_to", np.array([l.to_substation for l in self.lines]))

        for arr in ("object_substation", "gen_index", "load_index", "line_or_index",
                    "line_ex_index", "susceptance", "thermal_limit", "line_from", "line_to"):
            getattr(self, arr).setflags(write=False)

    def _substation_of(self, obj: ObjectRef) -> int:
        if obj.kind == GEN:
            return self.generators[obj.id].substation
        if obj.kind == LOAD:
            return self.loads[obj.id].substation
        if obj.kind == LINE_OR:
            return self.lines[obj.id].from_substation
        if obj.kind == LINE_EX:
            return self.lines[obj.id].to_substation
        raise KeyError(f"unknown object kind {obj.kind!r}")

    @property
    def n_objects(self) -> int:
        return len(self.object_order)

    def objects_at(self, substation: int) -> list[int]:
        """Canonical indices of the objects attached to one substation."""
        return [int(k) for k in np.flatnonzero(self.object_substation == substation)]

    def validate(self):
        if len(self.substations) != N_SUBSTATIONS:
            raise GridConfigError(f"expected {N_SUBSTATIONS} substations, got {len(self.substations)}")
        if len(self.lines) != N_LINES:
            raise GridConfigError(f"expected {N_LINES} lines, got {len(self.lines)}")
        if len(self.generators) != N_GENERATORS:
            raise GridConfigError(f"expected {N_GENERATORS} generators, got {len(self.generators)}")
        if len(self.loads) != N_LOADS:
            raise GridConfigError(f"expected {N_LOADS} loads, got {len(self.loads)}")
        sub_ids = {s.id for s in self.substations}
        for line in self.lines:
            if line.from_substation not in sub_ids or line.to_substation not in sub_ids:
                raise GridConfigError(f"line {line.id} references a missing substation")
            if line.from_substation == line.to_substation:
                raise GridConfigError(f"line {line.id} endpoints must differ")
            if line.susceptance <= 0:
                raise GridConfigError(f"line {line.id}: susceptance must be positive")
            if line.thermal_limit <= 0:
                raise GridConfigError(f"line {line.id}: thermal_limit must be positive")
        for g in self.generators:
            if g.substation not in sub_ids:
                raise GridConfigError(f"generator {g.id} references a missing substation")
        for l in self.loads:
            if l.substation not in sub_ids:
                raise GridConfigError(f"load {l.id} references a missing substation")


@dataclass(frozen=True)
class SetAction:
    """Absolute busbar assignment for the objects of one substation.

    ``substation is None`` encodes the explicit do-nothing action.  The
    assignment pairs canonical object indices with target busbars; objects
    that are disabled at application time keep their -1 entry.
    """

    substation: int | None
    object_index: tuple[int, ...] = ()
    busbar: tuple[int, ...] = ()
    index: int | None = None    # position in the enumerated action space, if known

    @property
    def is_do_nothing(self) -> bool:
        return self.substation is None

    def describe(self) -> str:
        if self.is_do_nothing:
            return "do-nothing"
        parts = ",".join(f"{k}:{b}" for k, b in zip(self.object_index, self.busbar))
        return f"sub{self.substation}[{parts}]"


DO_NOTHING = SetAction(substation=None, index=0)


def default_topology(grid: GridTopology) -> np.ndarray:
    """All enabled objects on busbar 1."""
    return np.full(grid.n_objects, BUS1, dtype=np.int8)


def disable_line(topology: np.ndarray, grid: GridTopology, line: int) -> np.ndarray:
    """Return a copy with both endpoints of ``line`` set to -1."""
    out = topology.copy()
    out[grid.line_or_index[line]] = DISABLED
    out[grid.line_ex_index[line]] = DISABLED
    return out


def enabled_lines(topology: np.ndarray, grid: GridTopology) -> np.ndarray:
    """Boolean mask over lines; a line is enabled iff its endpoints are not -1."""
    return topology[grid.line_or_index] != DISABLED


def canonical_index(grid: GridTopology, obj: ObjectRef) -> int:
    """Position of an object in the canonical ordering (gens, loads, origins, extremities)."""
    if obj.kind == GEN:
        block, count = 0, len(grid.generators)
    elif obj.kind == LOAD:
        block, count = len(grid.generators), len(grid.loads)
    elif obj.kind == LINE_OR:
        block, count = len(grid.generators) + len(grid.loads), len(grid.lines)
    elif obj.kind == LINE_EX:
        block, count = len(grid.generators) + len(grid.loads) + len(grid.lines), len(grid.lines)
    else:
        raise KeyError(f"unknown object kind {obj.kind!r}")
    if not 0 <= obj.id < count:
        raise KeyError(f"no {obj.kind} with id {obj.id}")
    return block + obj.id


def apply_set_action(topology: np.ndarray, grid: GridTopology, action: SetAction) -> np.ndarray:
    """Apply a set-action, returning a new topology vector.

    Objects outside the action's substation are untouched; disabled objects
    at the substation stay at -1.  The explicit do-nothing returns the input
    unchanged (same array, no copy).
    """
    if action.is_do_nothing:
        return topology
    idx = np.asarray(action.object_index, dtype=np.int64)
    if not np.all(grid.object_substation[idx] == action.substation):
        raise ValueError(f"action assigns objects outside substation {action.substation}")
    out = topology.copy()
    keep = topology[idx] != DISABLED
    out[idx[keep]] = np.asarray(action.busbar, dtype=np.int8)[keep]
    return out


def _parse_grid(raw: dict) -> GridTopology:
    try:
        subs = tuple(
            Substation(id=int(s["id"]), x=float(s.get("x", 0.0)), y=float(s.get("y", 0.0)))
            for s in raw["substations"]
        )
        lines = tuple(
            Line(
                id=int(l["id"]),
                from_substation=int(l["from"]),
                to_substation=int(l["to"]),
                susceptance=float(l["susceptance"]),
                thermal_limit=float(l["thermal_limit"]),
            )
            for l in raw["lines"]
        )
        gens = tuple(
            Generator(id=int(g["id"]), substation=int(g["substation"]), kind=str(g["kind"]))
            for g in raw["generators"]
        )
        loads = tuple(Load(id=int(l["id"]), substation=int(l["substation"])) for l in raw["loads"])
    except (KeyError, TypeError, ValueError) as exc:
        raise GridConfigError(f"malformed grid metadata: {exc}") from exc

    for name, items in (("substations", subs), ("lines", lines), ("generators", gens), ("loads", loads)):
        if [it.id for it in items] != list(range(len(items))):
            raise GridConfigError(f"{name}: ids must be 0..{len(items) - 1} in order")

    grid = GridTopology(substations=subs, lines=lines, generators=gens, loads=loads)
    grid.validate()
    return grid


def load_grid(path) -> GridTopology:
    """Load a grid from a metadata JSON file."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GridConfigError(f"grid metadata is not valid JSON: {exc}") from exc
    return _parse_grid(raw)


def build_reference_grid() -> GridTopology:
    """The bundled 14-substation network (transmission side 0-4, distribution 5-13)."""
    raw = json.loads(resources.files("gridtopo.data").joinpath("ieee14_grid.json").read_text())
    return _parse_grid(raw)
