"""Session-oriented HTTP service exposing live grid days.

One session is one scenario day advanced step by step: the client (or a
named agent via /auto) chooses an action for each transition, the service
applies the same toggle/act/step sequence the batch runner uses, so a
recorded session replays to the identical terminal state.  Sessions live
in memory; one writer lock per session serializes mutations while reads
and what-if simulations work off the latest solved state.  A websocket
push channel emits a snapshot after every mutation.
"""

from __future__ import annotations

import asyncio
import threading
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .action_space import ActionSpace, build_action_space
from .expert_agents import (
    AgentConfig,
    DoNothingAgent,
    GreedyAgent,
    N1Agent,
    N1Config,
    OutagePlan,
    OverflowRules,
    Regime,
    _resolve_plan,
    parse_regime,
)
from .grid_model import (
    DISABLED,
    DO_NOTHING,
    GridTopology,
    SetAction,
    apply_set_action,
    build_reference_grid,
    disable_line,
)
from .imitation import feature_size
from .ml_agents import MlAgent, MlAgentConfig
from .mlp import load_model
from .power_flow import (
    GridState,
    Injections,
    make_state,
    simulate,
    state_is_game_over,
    step,
)
from .scenarios import Day, days, read_scenario_set

EXPERT_AGENTS = ("donothing", "greedy", "n1")
ML_AGENTS = ("naive", "verify", "verify_greedy", "verify_n1")


# ------------------------------------------------------------------ session

@dataclass
class Session:
    id: str
    scenario_id: int
    day_index: int
    regime: Regime
    day: Day
    plan: Optional[OutagePlan]
    state: GridState
    step_no: int = 0
    status: str = "running"            # running | completed | failed
    cause: Optional[str] = None
    history: list = field(default_factory=list)
    advisor: Optional[str] = None
    advisor_cache: Optional[tuple] = None   # (step_no, suggestion dict)
    remembered: dict = field(default_factory=dict)  # line -> pre-outage busbars
    lock: threading.Lock = field(default_factory=threading.Lock)
    snapshots: list = field(default_factory=list)
    new_snapshot: threading.Condition = field(default_factory=threading.Condition)

    def emit(self) -> None:
        res = self.state.result
        snap = {
            "type": "state",
            "step": self.step_no,
            "rho_max": float(self.state.rho_max),
            "topology": [int(v) for v in self.state.topology],
            "loadings": [float(v) for v in res.loading],
            "game_over": self.status == "failed",
        }
        with self.new_snapshot:
            self.snapshots.append(snap)
            self.new_snapshot.notify_all()

    def wait_snapshot(self, index: int, timeout: float = 0.5):
        with self.new_snapshot:
            if len(self.snapshots) <= index:
                self.new_snapshot.wait(timeout)
            if len(self.snapshots) > index:
                return self.snapshots[index]
            return None


@dataclass
class AppState:
    grid: GridTopology
    space: ActionSpace
    scenarios: dict
    manifest: dict
    model_path: Optional[str] = None
    model: object = None
    sessions: dict = field(default_factory=dict)
    registry_lock: threading.Lock = field(default_factory=threading.Lock)
    # canonical assignment -> action index, for validating explicit bodies
    assignment_index: dict = field(default_factory=dict)


def _assignment_key(action: SetAction):
    pairs = sorted(zip(action.object_index, action.busbar))
    return (action.substation, tuple(pairs))


def _make_agent(app_state: AppState, name: str, cfg: AgentConfig = AgentConfig()):
    if name == "donothing":
        return DoNothingAgent()
    if name == "greedy":
        return GreedyAgent(app_state.space, cfg)
    if name == "n1":
        return N1Agent(app_state.space, cfg, N1Config())
    if name in ML_AGENTS:
        if app_state.model is None:
            raise HTTPException(422, detail=f"agent {name!r} needs a loaded model; start with --model")
        return MlAgent(
            app_state.model, app_state.space, app_state.grid,
            MlAgentConfig(variant=name, eta=cfg.eta, theta=cfg.theta),
        )
    raise HTTPException(
        422, detail=f"unknown agent {name!r}; pick one of {EXPERT_AGENTS + ML_AGENTS}"
    )


# ------------------------------------------------------------ step mechanics
# The three helpers reproduce the batch runner's transition exactly:
# opponent toggles first, then the action, then the step dynamics.

def _begin_step(session: Session, grid: GridTopology) -> Optional[int]:
    """Opponent toggles for the next step; None when they black the grid out."""
    t = session.step_no + 1
    plan, state = session.plan, session.state
    if plan is None:
        return t
    topo = state.topology
    changed = False
    for ev in plan.events:
        if ev.start == t:
            session.remembered[ev.line] = (
                int(topo[grid.line_or_index[ev.line]]),
                int(topo[grid.line_ex_index[ev.line]]),
            )
            topo = disable_line(topo, grid, ev.line)
            changed = True
        elif ev.end == t:
            restored = topo.copy()
            orb, exb = session.remembered.get(ev.line, (1, 1))
            restored[grid.line_or_index[ev.line]] = orb
            restored[grid.line_ex_index[ev.line]] = exb
            topo = restored
            changed = True
    if not changed:
        return t
    session.state = make_state(
        grid, topo, state.injections,
        timestep=state.timestep, overflow_steps=state.overflow_steps,
    )
    over = state_is_game_over(session.state)
    if over is not None:
        session.status, session.cause = "failed", over
        session.step_no = t
        return None
    return t


def _finish_step(
    session: Session,
    grid: GridTopology,
    t: int,
    action: SetAction,
    source: str,
    rules: OverflowRules = OverflowRules(),
) -> None:
    state = session.state
    if not action.is_do_nothing:
        state = replace(state, topology=apply_set_action(state.topology, grid, action))
        session.history.append({
            "step": t,
            "action_index": action.index,
            "substation": action.substation,
            "source": source,
        })
    forecast = Injections(gen_p=session.day.gen_p[t], load_p=session.day.load_p[t])
    out = step(state, forecast, rules)
    session.state = out.state
    session.step_no = t
    if out.game_over:
        session.status, session.cause = "failed", out.cause
    elif t >= 287:
        session.status = "completed"


# ----------------------------------------------------------------- payloads

class CreateSession(BaseModel):
    scenario: int
    day: int
    regime: str = "full"
    advisor: Optional[str] = None


class ActionBody(BaseModel):
    action_index: Optional[int] = None
    substation: Optional[int] = None
    object_index: Optional[list] = None
    busbar: Optional[list] = None


class AutoBody(BaseModel):
    agent: str
    steps: int = 1


def _resolve_action(app_state: AppState, body: ActionBody) -> SetAction:
    space = app_state.space
    if body.action_index is not None:
        if not 0 <= body.action_index < len(space.actions):
            raise HTTPException(
                422,
                detail=f"action_index {body.action_index} outside 0..{len(space.actions) - 1}",
            )
        return space.actions[body.action_index]
    if body.substation is None and not body.object_index:
        return DO_NOTHING
    if body.substation is None or body.object_index is None or body.busbar is None:
        raise HTTPException(
            422, detail="an explicit action needs substation, object_index and busbar"
        )
    if len(body.object_index) != len(body.busbar):
        raise HTTPException(422, detail="object_index and busbar lengths differ")
    probe = SetAction(
        substation=int(body.substation),
        object_index=tuple(int(v) for v in body.object_index),
        busbar=tuple(int(v) for v in body.busbar),
    )
    k = app_state.assignment_index.get(_assignment_key(probe))
    if k is None and all(b in (1, 2) for b in probe.busbar):
        # busbar labels are arbitrary, the mirrored assignment is the same
        # physical action; the table stores one representative
        mirror = replace(probe, busbar=tuple(3 - b for b in probe.busbar))
        k = app_state.assignment_index.get(_assignment_key(mirror))
    if k is None:
        raise HTTPException(
            422,
            detail="assignment is not a member of the valid action set "
            "(busbars with injections but no line endpoint are forbidden)",
        )
    return app_state.space.actions[k]


def _suggestion(app_state: AppState, session: Session) -> Optional[dict]:
    if session.advisor is None:
        return None
    if session.advisor_cache and session.advisor_cache[0] == session.step_no:
        return session.advisor_cache[1]
    agent = _make_agent(app_state, session.advisor)
    t_next = min(session.step_no + 1, 287)
    if session.plan is not None and session.plan.active(t_next) and agent.during_outage:
        agent = agent.during_outage
    forecast = Injections(
        gen_p=session.day.gen_p[t_next], load_p=session.day.load_p[t_next]
    )
    decision = agent.decide(session.state, forecast)
    suggestion = {
        "agent": agent.name,
        "action_index": decision.action.index,
        "substation": decision.action.substation,
        "sim_rho": None if np.isnan(decision.sim_rho) else float(decision.sim_rho),
        "deliberated": decision.deliberated,
    }
    session.advisor_cache = (session.step_no, suggestion)
    return suggestion


def _session_payload(app_state: AppState, session: Session) -> dict:
    res = session.state.result
    grid = app_state.grid
    topo = session.state.topology
    disabled = [
        l for l in range(len(grid.lines))
        if topo[grid.line_or_index[l]] == DISABLED or topo[grid.line_ex_index[l]] == DISABLED
    ]
    outages = []
    if session.plan is not None:
        outages = [
            {
                "line": ev.line,
                "start": ev.start,
                "end": ev.end,
                "active": ev.start <= session.step_no < ev.end,
            }
            for ev in session.plan.events
        ]
    return {
        "id": session.id,
        "scenario": session.scenario_id,
        "day": session.day_index,
        "regime": session.regime.label,
        "step": session.step_no,
        "status": session.status,
        "cause": session.cause,
        "rho_max": float(session.state.rho_max),
        "topology": [int(v) for v in topo],
        "loadings": [float(v) for v in res.loading],
        "line_flow": [float(v) for v in res.line_flow],
        "injections": {
            "gen_p": [float(v) for v in session.state.injections.gen_p],
            "load_p": [float(v) for v in session.state.injections.load_p],
        },
        "disabled_lines": disabled,
        "outages": outages,
        "overflow_steps": [int(v) for v in session.state.overflow_steps],
        "history": list(session.history),
        "advisor": _suggestion(app_state, session),
    }


# -------------------------------------------------------------------- app

def create_app(
    scenario_dir: str | Path,
    *,
    grid: GridTopology | None = None,
    model_path: str | Path | None = None,
    console_dir: str | Path | None = None,
) -> FastAPI:
    grid = grid or build_reference_grid()
    scenarios, split, manifest = read_scenario_set(Path(scenario_dir))
    space = build_action_space(grid)
    app_state = AppState(
        grid=grid,
        space=space,
        scenarios={sc.id: sc for sc in scenarios},
        manifest=manifest,
        model_path=str(model_path) if model_path else None,
        model=load_model(model_path) if model_path else None,
    )
    for k, action in enumerate(space.actions):
        if not action.is_do_nothing:
            app_state.assignment_index[_assignment_key(action)] = k
    if app_state.model is not None and len(app_state.model.norm.mean) != feature_size(grid):
        raise ValueError("model feature size does not match the grid")

    app = FastAPI(title="gridtopo service")
    app.state.workbench = app_state
    # the console may be opened from file:// or a dev server on another port
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def get_session(sid: str) -> Session:
        session = app_state.sessions.get(sid)
        if session is None:
            raise HTTPException(404, detail=f"no session {sid!r}")
        return session

    @app.get("/api/grid")
    def grid_geometry():
        """Static geometry and object layout the console draws from."""
        return {
            "substations": [
                {"id": s.id, "x": s.x, "y": s.y} for s in grid.substations
            ],
            "lines": [
                {
                    "id": l.id,
                    "from": l.from_substation,
                    "to": l.to_substation,
                    "thermal_limit": l.thermal_limit,
                }
                for l in grid.lines
            ],
            "objects": [
                {
                    "index": k,
                    "kind": o.kind,
                    "id": o.id,
                    "substation": int(grid.object_substation[k]),
                }
                for k, o in enumerate(grid.object_order)
            ],
        }

    @app.get("/api/scenarios")
    def scenario_manifest():
        return {
            "scenarios": [
                {
                    "id": sid,
                    "days": len(list(days(sc))),
                }
                for sid, sc in sorted(app_state.scenarios.items())
            ],
            "split": app_state.manifest.get("split", {}),
            "seed": app_state.manifest.get("seed"),
            "model": app_state.model_path,
        }

    @app.get("/api/actions")
    def action_table():
        return {
            "count": len(space.actions),
            "actions": [
                {
                    "index": k,
                    "substation": a.substation,
                    "object_index": list(a.object_index),
                    "busbar": list(a.busbar),
                }
                for k, a in enumerate(space.actions)
            ],
        }

    @app.post("/api/sessions", status_code=201)
    def create_session(body: CreateSession):
        sc = app_state.scenarios.get(body.scenario)
        if sc is None:
            raise HTTPException(404, detail=f"no scenario {body.scenario}")
        all_days = list(days(sc))
        if not 0 <= body.day < len(all_days):
            raise HTTPException(404, detail=f"scenario {body.scenario} has no day {body.day}")
        try:
            regime = parse_regime(body.regime)
        except ValueError as err:
            raise HTTPException(422, detail=str(err))
        if body.advisor is not None:
            _make_agent(app_state, body.advisor)   # validate eagerly
        day = all_days[body.day]
        from .expert_agents import _forced_topology

        try:
            topo = _forced_topology(grid, regime)
        except ValueError as err:
            raise HTTPException(422, detail=str(err))
        state = make_state(
            grid, topo, Injections(gen_p=day.gen_p[0], load_p=day.load_p[0])
        )
        session = Session(
            id=uuid.uuid4().hex[:12],
            scenario_id=sc.id,
            day_index=body.day,
            regime=regime,
            day=day,
            plan=_resolve_plan(day, regime),
            state=state,
            advisor=body.advisor,
        )
        over = state_is_game_over(state)
        if over is not None:
            session.status, session.cause = "failed", over
        with app_state.registry_lock:
            app_state.sessions[session.id] = session
        session.emit()
        return _session_payload(app_state, session)

    @app.get("/api/sessions/{sid}")
    def read_session(sid: str):
        return _session_payload(app_state, get_session(sid))

    @app.post("/api/sessions/{sid}/simulate")
    def what_if(sid: str, body: ActionBody):
        session = get_session(sid)
        action = _resolve_action(app_state, body)
        with session.lock:
            state = session.state
            t_next = min(session.step_no + 1, 287)
        forecast = Injections(
            gen_p=session.day.gen_p[t_next], load_p=session.day.load_p[t_next]
        )
        outcome = simulate(state, action, forecast)
        finite = np.isfinite(outcome.rho_max)
        return {
            "action_index": action.index,
            "rho_max": float(outcome.rho_max) if finite else None,
            "game_over": not finite,
            "loadings": [float(v) for v in outcome.per_line] if finite else None,
            "deltas": [
                float(v) for v in (outcome.per_line - state.result.loading)
            ] if finite else None,
        }

    @app.post("/api/sessions/{sid}/act")
    def act(sid: str, body: ActionBody):
        session = get_session(sid)
        action = _resolve_action(app_state, body)
        with session.lock:
            if session.status != "running":
                raise HTTPException(409, detail=f"session is {session.status}")
            t = _begin_step(session, grid)
            if t is not None:
                _finish_step(session, grid, t, action, source="operator")
            session.emit()
            return _session_payload(app_state, session)

    @app.post("/api/sessions/{sid}/auto")
    def auto(sid: str, body: AutoBody):
        session = get_session(sid)
        agent = _make_agent(app_state, body.agent)
        if body.steps < 1:
            raise HTTPException(422, detail="steps must be positive")
        with session.lock:
            if session.status != "running":
                raise HTTPException(409, detail=f"session is {session.status}")
            for _ in range(body.steps):
                if session.status != "running":
                    break
                t = _begin_step(session, grid)
                if t is None:
                    session.emit()
                    break
                decider = agent
                if (
                    session.plan is not None
                    and session.plan.active(t)
                    and agent.during_outage is not None
                ):
                    decider = agent.during_outage
                forecast = Injections(
                    gen_p=session.day.gen_p[t], load_p=session.day.load_p[t]
                )
                decision = decider.decide(session.state, forecast)
                _finish_step(
                    session, grid, t, decision.action, source=f"auto:{decider.name}"
                )
                session.emit()
            return _session_payload(app_state, session)

    @app.get("/api/sessions/{sid}/export")
    def export_session(sid: str):
        session = get_session(sid)
        return {
            "session": _session_payload(app_state, session),
            "snapshots": list(session.snapshots),
        }

    @app.websocket("/api/sessions/{sid}/stream")
    async def stream(ws: WebSocket, sid: str):
        session = app_state.sessions.get(sid)
        if session is None:
            await ws.close(code=4404)
            return
        await ws.accept()
        sent = 0
        try:
            while True:
                snap = await asyncio.to_thread(session.wait_snapshot, sent)
                if snap is None:
                    # allow cancellation/disconnect to surface
                    await asyncio.sleep(0)
                    continue
                await ws.send_json(snap)
                sent += 1
        except (WebSocketDisconnect, RuntimeError):
            return

    if console_dir is not None:
        # built operator console, same origin as the API
        app.mount("/", StaticFiles(directory=console_dir, html=True), name="console")

    return app
