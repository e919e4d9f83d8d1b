"""DC power flow, overload dynamics, and one-step action simulation.

Electrical nodes are (substation, busbar) pairs holding at least one attached
object.  The solver builds the susceptance Laplacian per connected component,
fixes one slack node per component (lowest-indexed node hosting a generator;
the slack absorbs any power imbalance), and recovers line flows from angle
differences.  Loading is |MW flow| / thermal limit; under the lossless DC
approximation current and MW flow are proportional, so thermal limits are
stated in MW-equivalent.

Components that contain load but no generator cannot serve that load; the
solver reports the unserved MW and callers treat it as a game-over.

``simulate`` answers "what would the next step look like under this action
and these injections": a pure solve of the candidate topology, with the
game-over convention mapped to an infinite maximum loading.  It applies no
overload-counter dynamics, so simulating the current injections under a
do-nothing action reproduces the live loadings exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .grid_model import (
    DISABLED,
    GridTopology,
    SetAction,
    apply_set_action,
    enabled_lines,
)

INFINITE = math.inf

# MW below which unserved load is considered zero
UNSERVED_TOL = 1e-9



@dataclass(frozen=True)
class Injections:
    """Active power per generator and per load, in MW."""

    gen_p: np.ndarray
    load_p: np.ndarray

    def __post_init__(self):
        gen = np.ascontiguousarray(self.gen_p, dtype=np.float64)
        load = np.ascontiguousarray(self.load_p, dtype=np.float64)
        if not np.all(np.isfinite(gen)) or not np.all(np.isfinite(load)):
            raise ValueError("injections must be finite")
        if np.any(load < 0):
            raise ValueError("load_p must be non-negative")
        gen.setflags(write=False)
        load.setflags(write=False)
        object.__setattr__(self, "gen_p", gen)
        object.__setattr__(self, "load_p", load)


@dataclass(frozen=True)
class PowerFlowResult:
    line_flow: np.ndarray       # MW, signed origin->extremity
    loading: np.ndarray         # |flow| / thermal_limit, 0 for disabled lines
    rho_max: float              # max loading over enabled lines
    converged: bool
    islanded_load: float        # MW of load in generator-free components


@dataclass(frozen=True)
class OverflowRules:
    """Disconnection dynamics: soft overflows accumulate, hard ones trip at once."""

    soft_threshold: float = 1.0
    soft_steps: int = 3
    hard_threshold: float = 2.0


@dataclass(frozen=True)
class GridState:
    """Dynamic state: topology, injections, solved flows, overflow counters."""

    grid: GridTopology
    topology: np.ndarray
    injections: Injections
    result: PowerFlowResult
    overflow_steps: np.ndarray
    timestep: int = 0

    @property
    def rho_max(self) -> float:
        return self.result.rho_max


@dataclass(frozen=True)
class StepOutcome:
    state: GridState
    game_over: bool
    disconnections: tuple[int, ...]     # lines tripped this step by overflow rules
    cause: str | None = None            # set when game_over


@dataclass(frozen=True)
class SimulationOutcome:
    """Result of simulating one candidate step; rho_max is INFINITE on game-over."""

    rho_max: float
    per_line: np.ndarray

    @property
    def is_game_over(self) -> bool:
        return self.rho_max == INFINITE


class _NodeSpace:
    """Node incidence for one (grid, topology) pair.

    Node slot = 2 * substation + (busbar - 1).  Only slots with at least one
    attached object are active.
    """

    __slots__ = ("n_slots", "gen_node", "load_node", "or_node", "ex_node",
                 "line_on", "has_gen_slot", "active_slot", "root")

    def __init__(self, grid: GridTopology, topology: np.ndarray):
        self.n_slots = 2 * len(grid.substations)
        topo = topology.astype(np.int64, copy=False)
        gen_bus = topo[grid.gen_index]
        load_bus = topo[grid.load_index]
        or_bus = topo[grid.line_or_index]
        ex_bus = topo[grid.line_ex_index]

        self.gen_node = 2 * grid.object_substation[grid.gen_index] + (gen_bus - 1)
        self.load_node = 2 * grid.object_substation[grid.load_index] + (load_bus - 1)
        self.line_on = or_bus != DISABLED
        self.or_node = 2 * grid.line_from + np.where(self.line_on, or_bus - 1, 0)
        self.ex_node = 2 * grid.line_to + np.where(self.line_on, ex_bus - 1, 0)

        active = np.zeros(self.n_slots, dtype=bool)
        active[self.gen_node] = True
        active[self.load_node] = True
        active[self.or_node[self.line_on]] = True
        active[self.ex_node[self.line_on]] = True
        self.active_slot = active

        has_gen = np.zeros(self.n_slots, dtype=bool)
        has_gen[self.gen_node] = True
        self.has_gen_slot = has_gen

        # union-find over node slots along enabled lines
        root = np.arange(self.n_slots)
        for l in np.flatnonzero(self.line_on):
            a, b = self._find(root, self.or_node[l]), self._find(root, self.ex_node[l])
            if a != b:
                root[b] = a
        for slot in np.flatnonzero(active):
            self._find(root, slot)
        self.root = root

    @staticmethod
    def _find(root: np.ndarray, i: int) -> int:
        while root[i] != i:
            root[i] = root[root[i]]
            i = root[i]
        return i

    def injections_per_slot(self, inj: Injections) -> np.ndarray:
        p = np.zeros(self.n_slots)
        np.add.at(p, self.gen_node, inj.gen_p)
        np.add.at(p, self.load_node, -inj.load_p)
        return p


def electrical_nodes(grid: GridTopology, topology: np.ndarray) -> dict:
    """Expose the node decomposition (for tests and feature extraction).

    Returns a dict with per-object node slots, active slot mask, and the
    component root of each active slot.
    """
    ns = _NodeSpace(grid, topology)
    roots = {int(s): int(ns._find(ns.root, s)) for s in np.flatnonzero(ns.active_slot)}
    return {
        "gen_node": ns.gen_node.copy(),
        "load_node": ns.load_node.copy(),
        "or_node": np.where(ns.line_on, ns.or_node, -1),
        "ex_node": np.where(ns.line_on, ns.ex_node, -1),
        "active": np.flatnonzero(ns.active_slot),
        "component_root": roots,
    }


def solve_dc(grid: GridTopology, topology: np.ndarray, injections: Injections) -> PowerFlowResult:
    """Solve B·theta = P per connected component and derive line flows."""
    ns = _NodeSpace(grid, topology)
    p = ns.injections_per_slot(injections)

    theta = np.zeros(ns.n_slots)
    islanded = 0.0
    converged = True

    active = np.flatnonzero(ns.active_slot)
    roots = np.array([ns._find(ns.root, s) for s in active])
    for comp_root in np.unique(roots):
        members = active[roots == comp_root]
        if not ns.has_gen_slot[members].any():
            load_here = -p[members].sum()
            if load_here > UNSERVED_TOL:
                islanded += load_here
            continue
        if len(members) == 1:
            continue  # single generator-bearing node: slack, theta 0
        slack = members[ns.has_gen_slot[members]].min()
        sub = members[members != slack]
        pos = {int(s): k for k, s in enumerate(sub)}
        n = len(sub)
        B = np.zeros((n, n))
        for l in np.flatnonzero(ns.line_on):
            a, b = ns.or_node[l], ns.ex_node[l]
            if ns._find(ns.root, a) != comp_root:
                continue
            bv = grid.susceptance[l]
            ia = pos.get(int(a))
            ib = pos.get(int(b))
            if ia is not None:
                B[ia, ia] += bv
                if ib is not None:
                    B[ia, ib] -= bv
            if ib is not None:
                B[ib, ib] += bv
                if ia is not None:
                    B[ib, ia] -= bv
        try:
            theta[sub] = np.linalg.solve(B, p[sub])
        except np.linalg.LinAlgError:
            converged = False
            break

    flow = np.zeros(len(grid.lines))
    if converged:
        on = ns.line_on
        flow[on] = grid.susceptance[on] * (theta[ns.or_node[on]] - theta[ns.ex_node[on]])
    loading = np.abs(flow) / grid.thermal_limit
    loading[~ns.line_on] = 0.0
    rho_max = float(loading.max()) if converged else float("nan")
    return PowerFlowResult(
        line_flow=flow,
        loading=loading,
        rho_max=rho_max,
        converged=converged,
        islanded_load=float(islanded),
    )


def solve_dc_series(
    grid: GridTopology,
    topology: np.ndarray,
    gen_p: np.ndarray,
    load_p: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized solve of many injection rows against one fixed topology.

    gen_p is (T, n_gen), load_p is (T, n_load).  Returns (flows, loading)
    of shape (T, n_lines).  Requires every component to contain a generator
    (true for any topology this workbench steps through without islanding);
    raises if not.
    """
    ns = _NodeSpace(grid, topology)
    T = gen_p.shape[0]
    p = np.zeros((T, ns.n_slots))
    np.add.at(p.T, ns.gen_node, gen_p.T)
    np.add.at(p.T, ns.load_node, -load_p.T)

    theta = np.zeros((T, ns.n_slots))
    active = np.flatnonzero(ns.active_slot)
    roots = np.array([ns._find(ns.root, s) for s in active])
    for comp_root in np.unique(roots):
        members = active[roots == comp_root]
        if not ns.has_gen_slot[members].any():
            if np.any(-p[:, members].sum(axis=1) > UNSERVED_TOL):
                raise ValueError("series solve hit a generator-free component with load")
            continue
        if len(members) == 1:
            continue
        slack = members[ns.has_gen_slot[members]].min()
        sub = members[members != slack]
        pos = {int(s): k for k, s in enumerate(sub)}
        n = len(sub)
        B = np.zeros((n, n))
        for l in np.flatnonzero(ns.line_on):
            a, b = ns.or_node[l], ns.ex_node[l]
            if ns._find(ns.root, a) != comp_root:
                continue
            bv = grid.susceptance[l]
            ia, ib = pos.get(int(a)), pos.get(int(b))
            if ia is not None:
                B[ia, ia] += bv
                if ib is not None:
                    B[ia, ib] -= bv
            if ib is not None:
                B[ib, ib] += bv
                if ia is not None:
                    B[ib, ia] -= bv
        theta[:, sub] = np.linalg.solve(B, p[:, sub].T).T

    flow = np.zeros((T, len(grid.lines)))
    on = ns.line_on
    flow[:, on] = grid.susceptance[on] * (theta[:, ns.or_node[on]] - theta[:, ns.ex_node[on]])
    loading = np.abs(flow) / grid.thermal_limit
    loading[:, ~on] = 0.0
    return flow, loading


def make_state(
    grid: GridTopology,
    topology: np.ndarray,
    injections: Injections,
    timestep: int = 0,
    overflow_steps: np.ndarray | None = None,
) -> GridState:
    """Solve the given topology/injections and wrap them as a GridState."""
    topo = np.ascontiguousarray(topology, dtype=np.int8)
    topo.setflags(write=False)
    counters = (
        np.zeros(len(grid.lines), dtype=np.int16)
        if overflow_steps is None
        else overflow_steps.astype(np.int16)
    )
    counters.setflags(write=False)
    result = solve_dc(grid, topo, injections)
    return GridState(
        grid=grid,
        topology=topo,
        injections=injections,
        result=result,
        overflow_steps=counters,
        timestep=timestep,
    )


def state_is_game_over(state: GridState) -> str | None:
    """Game-over cause of a solved state, or None."""
    if not state.result.converged:
        return "non-convergence"
    if state.result.islanded_load > UNSERVED_TOL:
        return "unserved-load"
    return None


def step(state: GridState, next_injections: Injections, rules: OverflowRules) -> StepOutcome:
    """Advance one timestep: new injections, overflow bookkeeping, cascades.

    Lines at or above the soft threshold accumulate one overflow step (the
    counter resets when the loading drops below it); a line trips when its
    counter reaches ``soft_steps`` or its loading reaches the hard threshold.
    Tripped lines are removed and the flow re-solved, repeating until no line
    trips.  Game-over when load becomes unserved or a solve fails.
    """
    grid = state.grid
    topo = state.topology.copy()
    counters = state.overflow_steps.copy()
    disconnections: list[int] = []
    cause: str | None = None

    res = solve_dc(grid, topo, next_injections)
    for iteration in range(len(grid.lines) + 1):
        if not res.converged:
            cause = "non-convergence"
            break
        if res.islanded_load > UNSERVED_TOL:
            cause = "unserved-load"
            break
        on = enabled_lines(topo, grid)
        if iteration == 0:
            over = on & (res.loading >= rules.soft_threshold)
            counters = np.where(over, counters + 1, 0).astype(np.int16)
            trips = on & ((res.loading >= rules.hard_threshold) | (counters >= rules.soft_steps))
        else:
            trips = on & (res.loading >= rules.hard_threshold)
        tripped = np.flatnonzero(trips)
        if len(tripped) == 0:
            break
        for l in tripped:
            topo[grid.line_or_index[l]] = DISABLED
            topo[grid.line_ex_index[l]] = DISABLED
            counters[l] = 0
        disconnections.extend(int(l) for l in tripped)
        res = solve_dc(grid, topo, next_injections)

    topo.setflags(write=False)
    counters.setflags(write=False)
    new_state = GridState(
        grid=grid,
        topology=topo,
        injections=next_injections,
        result=res,
        overflow_steps=counters,
        timestep=state.timestep + 1,
    )
    return StepOutcome(
        state=new_state,
        game_over=cause is not None,
        disconnections=tuple(disconnections),
        cause=cause,
    )


def simulate(state: GridState, action: SetAction, forecast: Injections) -> SimulationOutcome:
    """Maximum loading after applying ``action`` under ``forecast`` injections.

    Pure: never touches the live state.  Returns INFINITE when the candidate
    step is a game-over (unserved load or failed solve).
    """
    topo = apply_set_action(state.topology, state.grid, action)
    res = solve_dc(state.grid, topo, forecast)
    if not res.converged or res.islanded_load > UNSERVED_TOL:
        return SimulationOutcome(rho_max=INFINITE, per_line=res.loading)
    return SimulationOutcome(rho_max=res.rho_max, per_line=res.loading)


def simulate_with_line_out(
    state: GridState, action: SetAction, line: int, forecast: Injections
) -> SimulationOutcome:
    """As ``simulate``, with one line additionally forced out of service."""
    if state.topology[state.grid.line_or_index[line]] == DISABLED:
        raise ValueError(f"line {line} is already disabled")
    topo = apply_set_action(state.topology, state.grid, action).copy()
    topo[state.grid.line_or_index[line]] = DISABLED
    topo[state.grid.line_ex_index[line]] = DISABLED
    res = solve_dc(state.grid, topo, forecast)
    if not res.converged or res.islanded_load > UNSERVED_TOL:
        return SimulationOutcome(rho_max=INFINITE, per_line=res.loading)
    return SimulationOutcome(rho_max=res.rho_max, per_line=res.loading)


def with_injections(state: GridState, injections: Injections) -> GridState:
    """Re-solve the same topology under different injections (no dynamics)."""
    result = solve_dc(state.grid, state.topology, injections)
    return replace(state, injections=injections, result=result)
