"""Rule-based operators, the outage opponent, and the day runner.

Two expert policies share an activity gate: below max loading eta they do
nothing.  Above it, the greedy policy picks the action whose simulated next
step has the smallest maximum loading; the contingency policy first looks
for actions that keep the immediate loading under theta AND survive every
single-line contingency from its watch list, taking the one with the best
worst-case, and only falls back to the greedy rule when no such action
exists.  Game-over outcomes count as infinitely loaded, so they rank last
automatically.

The runner advances an agent through one 288-step day under one of three
regimes: the plain network, a planned outage (one line out all day), or an
unplanned-outage day where a seeded opponent cuts two lines for four hours
each.  Decisions are timed and logged as transitions; a day ends early on
blackout (unserved load or a failed solve).
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Protocol

import numpy as np

from .action_space import ActionSpace
from .grid_model import (
    DO_NOTHING,
    N_LINES,
    GridTopology,
    SetAction,
    apply_set_action,
    default_topology,
    disable_line,
    enabled_lines,
)
from .power_flow import (
    INFINITE,
    GridState,
    Injections,
    OverflowRules,
    make_state,
    simulate,
    simulate_with_line_out,
    solve_dc_series,
    state_is_game_over,
    step,
)
from .scenarios import Day

log = logging.getLogger(__name__)

# lines the unplanned-outage opponent may cut, and the planned-outage study set
ATTACKABLE_LINES = (0, 2, 4, 5, 6, 12)

_RADIAL_FEEDER = 18  # sole feed of a load; taking it out is never allowed


@dataclass(frozen=True)
class AgentConfig:
    eta: float = 0.97      # activity threshold: act only at or above this loading
    theta: float = 1.0     # risk threshold: immediate loadings below this count as secure

    def __post_init__(self):
        if not 0 < self.eta <= self.theta:
            raise ValueError("need 0 < eta <= theta")


@dataclass(frozen=True)
class N1Config:
    disable_set: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6, 12)

    def __post_init__(self):
        for l in self.disable_set:
            if not 0 <= l < N_LINES:
                raise ValueError(f"contingency line {l} does not exist")
            if l == _RADIAL_FEEDER:
                raise ValueError(
                    f"line {_RADIAL_FEEDER} feeds a load radially and cannot be in the contingency set"
                )


@dataclass(frozen=True)
class Decision:
    action: SetAction
    sim_rho: float          # simulated next-step max loading of the chosen action
    deliberated: bool       # False when the activity gate short-circuited


class Agent(Protocol):
    name: str
    during_outage: "Agent | None"

    def decide(self, state: GridState, forecast: Injections) -> Decision: ...


class DoNothingAgent:
    name = "donothing"
    during_outage = None

    def decide(self, state: GridState, forecast: Injections) -> Decision:
        return Decision(action=DO_NOTHING, sim_rho=float("nan"), deliberated=False)


def greedy_act(
    state: GridState, space: ActionSpace, forecast: Injections, cfg: AgentConfig
) -> SetAction:
    return _greedy_decide(state, space, forecast, cfg).action


def _action_rhos(state: GridState, space: ActionSpace, forecast: Injections) -> np.ndarray:
    return np.array([simulate(state, a, forecast).rho_max for a in space.actions])


def _greedy_decide(
    state: GridState, space: ActionSpace, forecast: Injections, cfg: AgentConfig
) -> Decision:
    if state.rho_max < cfg.eta:
        return Decision(action=DO_NOTHING, sim_rho=float("nan"), deliberated=False)
    rhos = _action_rhos(state, space, forecast)
    best = int(np.argmin(rhos))     # ties and all-INFINITE resolve to index 0
    if not np.isfinite(rhos[best]):
        log.warning(
            "every action simulates to game-over at step %d; failure imminent",
            state.timestep,
        )
        return Decision(action=DO_NOTHING, sim_rho=INFINITE, deliberated=True)
    return Decision(action=space.actions[best], sim_rho=float(rhos[best]), deliberated=True)


class GreedyAgent:
    name = "greedy"
    during_outage = None

    def __init__(self, space: ActionSpace, cfg: AgentConfig = AgentConfig()):
        self.space = space
        self.cfg = cfg

    def decide(self, state: GridState, forecast: Injections) -> Decision:
        return _greedy_decide(state, self.space, forecast, self.cfg)


def n1_loading(
    state: GridState,
    action: SetAction,
    forecast: Injections,
    n1cfg: N1Config,
) -> float:
    """Worst-case max loading over the watched single-line contingencies.

    Lines already out of service are skipped (their outage is realized); if
    that leaves no contingency, the plain simulated loading is returned.
    """
    on = enabled_lines(state.topology, state.grid)
    worst = -INFINITE
    any_line = False
    for l in n1cfg.disable_set:
        if not on[l]:
            continue
        any_line = True
        worst = max(worst, simulate_with_line_out(state, action, l, forecast).rho_max)
        if worst == INFINITE:
            return INFINITE
    if not any_line:
        return simulate(state, action, forecast).rho_max
    return worst


class N1Agent:
    """Contingency-aware policy; delegates to its greedy twin during active
    opponent outages (the runner consults ``during_outage``)."""

    name = "n1"

    def __init__(
        self,
        space: ActionSpace,
        cfg: AgentConfig = AgentConfig(),
        n1cfg: N1Config = N1Config(),
    ):
        self.space = space
        self.cfg = cfg
        self.n1cfg = n1cfg
        self.during_outage = GreedyAgent(space, cfg)

    def decide(self, state: GridState, forecast: Injections) -> Decision:
        if state.rho_max < self.cfg.eta:
            return Decision(action=DO_NOTHING, sim_rho=float("nan"), deliberated=False)
        space = self.space
        rhos = _action_rhos(state, space, forecast)

        on = enabled_lines(state.topology, state.grid)
        contingencies = [l for l in self.n1cfg.disable_set if on[l]]

        best_k = None
        best_v = INFINITE
        for k in range(len(space.actions)):
            if not rhos[k] < self.cfg.theta:
                continue
            v = -INFINITE
            for l in contingencies:
                r = simulate_with_line_out(state, space.actions[k], l, forecast).rho_max
                v = max(v, r)
                if v >= best_v:
                    break
            if not contingencies:
                v = rhos[k]
            if v < best_v:
                best_k, best_v = k, v
        if best_k is not None and np.isfinite(best_v):
            return Decision(
                action=space.actions[best_k], sim_rho=float(rhos[best_k]), deliberated=True
            )

        # no action secures the grid against its contingencies: act greedily
        best = int(np.argmin(rhos))
        if not np.isfinite(rhos[best]):
            log.warning(
                "every action simulates to game-over at step %d; failure imminent",
                state.timestep,
            )
            return Decision(action=DO_NOTHING, sim_rho=INFINITE, deliberated=True)
        return Decision(action=space.actions[best], sim_rho=float(rhos[best]), deliberated=True)


def n1_act(
    state: GridState,
    space: ActionSpace,
    forecast: Injections,
    cfg: AgentConfig = AgentConfig(),
    n1cfg: N1Config = N1Config(),
) -> SetAction:
    return N1Agent(space, cfg, n1cfg).decide(state, forecast).action


# ------------------------------------------------------------------ opponent

@dataclass(frozen=True)
class OutageEvent:
    line: int
    start: int
    duration: int

    @property
    def end(self) -> int:
        return self.start + self.duration


@dataclass(frozen=True)
class OutagePlan:
    events: tuple[OutageEvent, ...]

    def active(self, t: int) -> bool:
        return any(ev.start <= t < ev.end for ev in self.events)


_EVENT_STEPS = 48       # four hours
_MIN_GAP_STEPS = 12     # one hour between the two outages
_EVENTS_PER_DAY = 2


def build_outage_plan(
    day: Day, attackable: tuple[int, ...] = ATTACKABLE_LINES, seed: int = 0
) -> OutagePlan:
    """Two four-hour cuts on uniformly drawn lines, at least an hour apart.

    Deterministic per (scenario, day, seed); start times are rejection
    sampled uniformly over the feasible range.
    """
    if not attackable:
        raise ValueError("attackable line set is empty")
    rng = np.random.default_rng([0x0E1A9E, seed, day.scenario_id, day.day_index])
    lines = rng.choice(len(attackable), size=_EVENTS_PER_DAY, replace=True)
    latest = 288 - _EVENT_STEPS
    while True:
        starts = rng.integers(0, latest + 1, size=_EVENTS_PER_DAY)
        a, b = int(starts.min()), int(starts.max())
        if b - (a + _EVENT_STEPS) >= _MIN_GAP_STEPS:
            break
    order = np.argsort(starts)
    events = tuple(
        OutageEvent(line=int(attackable[lines[k]]), start=int(starts[k]), duration=_EVENT_STEPS)
        for k in order
    )
    return OutagePlan(events=events)


# -------------------------------------------------------------------- runner

@dataclass(frozen=True)
class Regime:
    kind: str                       # full | planned | unplanned
    line: int | None = None         # planned: the line out all day
    opponent_seed: int | None = None
    plan: OutagePlan | None = None  # unplanned: explicit plan overrides the seed

    def __post_init__(self):
        if self.kind not in ("full", "planned", "unplanned"):
            raise ValueError(f"unknown regime kind {self.kind!r}")
        if self.kind == "planned":
            if self.line is None or not 0 <= self.line < N_LINES:
                raise ValueError("planned regime needs a valid line id")
            if self.line == _RADIAL_FEEDER:
                raise ValueError(
                    f"line {_RADIAL_FEEDER} cannot be planned out: the resulting network is inherently invalid"
                )
        if self.kind == "unplanned" and self.opponent_seed is None and self.plan is None:
            raise ValueError("unplanned regime needs an opponent seed or an explicit plan")

    @property
    def label(self) -> str:
        if self.kind == "planned":
            return f"planned:{self.line}"
        if self.kind == "unplanned":
            return f"unplanned:{self.opponent_seed if self.plan is None else 'plan'}"
        return "full"


def parse_regime(text: str) -> Regime:
    if text == "full":
        return Regime(kind="full")
    kind, _, arg = text.partition(":")
    if kind == "planned" and arg:
        return Regime(kind="planned", line=int(arg))
    if kind == "unplanned" and arg:
        return Regime(kind="unplanned", opponent_seed=int(arg))
    raise ValueError(f"cannot parse regime {text!r}")


@dataclass(frozen=True)
class Transition:
    scenario_id: int
    day_index: int
    timestep: int               # step within the day, 1..287
    agent: str                  # the deciding policy (delegate's name during outages)
    regime: str
    topology: tuple[int, ...]
    gen_p: tuple[float, ...]
    load_p: tuple[float, ...]
    line_flow: tuple[float, ...]
    loading: tuple[float, ...]
    rho_max: float
    action_index: int
    action_substation: int | None
    sim_rho: float
    decision_us: float
    day_completed: bool = True


@dataclass(frozen=True)
class DayResult:
    scenario_id: int
    day_index: int
    agent: str
    regime: str
    completed: bool
    steps_survived: int         # 288 when completed
    failure_step: int | None
    cause: str | None
    n_deliberations: int
    n_actions: int              # decisions other than the explicit do-nothing
    decision_us: tuple[float, ...]


@dataclass
class RunHooks:
    on_decision: Callable | None = None   # (t, decider_name, decision)
    on_step: Callable | None = None       # (t, state)


def _forced_topology(grid: GridTopology, regime: Regime) -> np.ndarray:
    topo = default_topology(grid)
    if regime.kind == "planned":
        topo = disable_line(topo, grid, regime.line)
    return topo


def _resolve_plan(day: Day, regime: Regime) -> OutagePlan | None:
    if regime.kind != "unplanned":
        return None
    if regime.plan is not None:
        return regime.plan
    return build_outage_plan(day, seed=regime.opponent_seed)


def _fast_quiet_day(
    grid: GridTopology,
    day: Day,
    start_topo: np.ndarray,
    plan: OutagePlan | None,
    threshold: float,
) -> bool:
    """True when a vectorized screen proves no agent consultation and no
    overflow can occur, so stepping through the day is unnecessary."""
    cuts = []
    if plan is not None:
        for ev in plan.events:
            cuts.append((ev.start, ev.end, ev.line))
    bounds = sorted({0, 288} | {c[0] for c in cuts} | {min(c[1], 288) for c in cuts})
    try:
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            topo = start_topo
            for s, e, line in cuts:
                if s <= lo and hi <= e:
                    topo = disable_line(topo, grid, line)
            _, loading = solve_dc_series(grid, topo, day.gen_p[lo:hi], day.load_p[lo:hi])
            if loading.max() >= threshold:
                return False
    except ValueError:
        return False    # islanded segment; the stepped path will handle it
    return True


def run_day(
    agent,
    day: Day,
    regime: Regime,
    *,
    grid: GridTopology,
    rules: OverflowRules = OverflowRules(),
    hooks: RunHooks | None = None,
    fast_skip: bool = True,
) -> tuple[DayResult, list[Transition]]:
    """Advance one agent through one day; failure is data, not an error."""
    hooks = hooks or RunHooks()
    start_topo = _forced_topology(grid, regime)
    plan = _resolve_plan(day, regime)

    quiet_threshold = min(
        getattr(agent, "cfg", AgentConfig()).eta, rules.soft_threshold
    )
    if fast_skip and _fast_quiet_day(grid, day, start_topo, plan, quiet_threshold):
        return (
            DayResult(
                scenario_id=day.scenario_id,
                day_index=day.day_index,
                agent=agent.name,
                regime=regime.label,
                completed=True,
                steps_survived=288,
                failure_step=None,
                cause=None,
                n_deliberations=0,
                n_actions=0,
                decision_us=(),
            ),
            [],
        )

    state = make_state(
        grid, start_topo, Injections(gen_p=day.gen_p[0], load_p=day.load_p[0])
    )
    transitions: list[Transition] = []
    decision_us: list[float] = []
    n_actions = 0
    completed = True
    failure_step = None
    cause = None
    remembered: dict[int, tuple[int, int]] = {}

    over = state_is_game_over(state)
    if over is not None:
        completed, failure_step, cause = False, 0, over

    t = 0
    while completed and t < 287:
        t += 1
        # opponent toggles happen before the operator looks at the grid
        if plan is not None:
            topo = state.topology
            changed = False
            for ev in plan.events:
                if ev.start == t:
                    remembered[ev.line] = (
                        int(topo[grid.line_or_index[ev.line]]),
                        int(topo[grid.line_ex_index[ev.line]]),
                    )
                    topo = disable_line(topo, grid, ev.line)
                    changed = True
                elif ev.end == t:
                    restored = topo.copy()
                    orb, exb = remembered.get(ev.line, (1, 1))
                    restored[grid.line_or_index[ev.line]] = orb
                    restored[grid.line_ex_index[ev.line]] = exb
                    topo = restored
                    changed = True
            if changed:
                state = make_state(
                    grid, topo, state.injections,
                    timestep=state.timestep, overflow_steps=state.overflow_steps,
                )
                over = state_is_game_over(state)
                if over is not None:
                    completed, failure_step, cause = False, t, over
                    break

        decider = agent
        if plan is not None and plan.active(t) and agent.during_outage is not None:
            decider = agent.during_outage

        forecast = Injections(gen_p=day.gen_p[t], load_p=day.load_p[t])
        t0 = time.perf_counter()
        decision = decider.decide(state, forecast)
        elapsed_us = (time.perf_counter() - t0) * 1e6

        if hooks.on_decision is not None:
            hooks.on_decision(t, decider.name, decision)

        if decision.deliberated:
            decision_us.append(elapsed_us)
            res = state.result
            transitions.append(
                Transition(
                    scenario_id=day.scenario_id,
                    day_index=day.day_index,
                    timestep=t,
                    agent=decider.name,
                    regime=regime.label,
                    topology=tuple(int(v) for v in state.topology),
                    gen_p=tuple(float(v) for v in state.injections.gen_p),
                    load_p=tuple(float(v) for v in state.injections.load_p),
                    line_flow=tuple(float(v) for v in res.line_flow),
                    loading=tuple(float(v) for v in res.loading),
                    rho_max=float(state.rho_max),
                    action_index=decision.action.index if decision.action.index is not None else -1,
                    action_substation=decision.action.substation,
                    sim_rho=float(decision.sim_rho),
                    decision_us=elapsed_us,
                )
            )
            if not decision.action.is_do_nothing:
                n_actions += 1

        acted = (
            state
            if decision.action.is_do_nothing
            else replace(state, topology=apply_set_action(state.topology, grid, decision.action))
        )
        out = step(acted, forecast, rules)
        state = out.state
        if hooks.on_step is not None:
            hooks.on_step(t, state)
        if out.game_over:
            completed, failure_step, cause = False, t, out.cause
            break

    if not completed:
        transitions = [replace(tr, day_completed=False) for tr in transitions]

    return (
        DayResult(
            scenario_id=day.scenario_id,
            day_index=day.day_index,
            agent=agent.name,
            regime=regime.label,
            completed=completed,
            steps_survived=288 if completed else (failure_step or 0),
            failure_step=failure_step,
            cause=cause,
            n_deliberations=len(decision_us),
            n_actions=n_actions,
            decision_us=tuple(decision_us),
        ),
        transitions,
    )


# ------------------------------------------------------------ transition IO

def write_transitions(path: str | Path, transitions: Iterable[Transition]) -> int:
    """Append-style JSONL dump; returns the number of records written."""
    n = 0
    with open(path, "w") as fh:
        for tr in transitions:
            fh.write(json.dumps(asdict(tr)) + "\n")
            n += 1
    return n


def read_transitions(path: str | Path) -> list[Transition]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            for key in ("topology", "gen_p", "load_p", "line_flow", "loading"):
                rec[key] = tuple(rec[key])
            out.append(Transition(**rec))
    return out
