"""Operators driven by the trained policy network.

Four variants share the expert activity gate (do nothing below eta).  The
naive one executes whatever the network proposes, decoded to the nearest
valid action.  Verify simulates that proposal first and falls back to
do-nothing when it would make matters worse.  The two hybrid variants trust
the network only while the grid is comfortable: at or above the risk
threshold theta they hand the step to the greedy expert or the contingency
expert instead.  During forced-outage windows the contingency hybrid drops
to its greedy twin, mirroring the expert pairing.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace

import numpy as np

from .action_space import ActionSpace, nearest_valid_switch, switch_to_set
from .expert_agents import AgentConfig, Decision, GreedyAgent, N1Agent, N1Config
from .grid_model import DO_NOTHING, GridTopology
from .imitation import extract_features, feature_size
from .mlp import TrainedModel
from .power_flow import GridState, Injections, simulate

VARIANTS = ("naive", "verify", "verify_greedy", "verify_n1")


@dataclass(frozen=True)
class MlAgentConfig:
    variant: str = "naive"
    eta: float = 0.97       # activity threshold: act only at or above this loading
    theta: float = 1.0      # risk threshold: hand off / reject above this
    verify_or: bool = False  # reject when the candidate exceeds EITHER bound

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; pick one of {VARIANTS}")
        if not 0 < self.eta <= self.theta:
            raise ValueError("need 0 < eta <= theta")


class MlAgent:
    """Policy-network agent; ``variant`` selects the safeguard level."""

    def __init__(
        self,
        model: TrainedModel,
        space: ActionSpace,
        grid: GridTopology,
        cfg: MlAgentConfig = MlAgentConfig(),
        n1cfg: N1Config = N1Config(),
    ):
        if len(model.norm.mean) != feature_size(grid):
            raise ValueError(
                f"model expects {len(model.norm.mean)} features, "
                f"grid produces {feature_size(grid)}"
            )
        if model.mlp.sizes[-1] != grid.n_objects:
            raise ValueError(
                f"model emits {model.mlp.sizes[-1]} outputs, "
                f"grid has {grid.n_objects} objects"
            )
        self.model = model
        self.space = space
        self.grid = grid
        self.cfg = cfg
        self.n1cfg = n1cfg
        self.name = cfg.variant
        expert_cfg = AgentConfig(eta=cfg.eta, theta=cfg.theta)
        self._greedy = GreedyAgent(space, expert_cfg)
        self._n1 = N1Agent(space, expert_cfg, n1cfg) if cfg.variant == "verify_n1" else None
        # the contingency hybrid swaps its expert for greedy while the
        # opponent holds a line down, like the expert pairing does
        if cfg.variant == "verify_n1":
            self.during_outage = MlAgent(
                model, space, grid, dc_replace(cfg, variant="verify_greedy"), n1cfg
            )
        else:
            self.during_outage = None

    def decide(self, state: GridState, forecast: Injections) -> Decision:
        if state.rho_max < self.cfg.eta:
            return Decision(action=DO_NOTHING, sim_rho=float("nan"), deliberated=False)
        if self.cfg.variant in ("verify_greedy", "verify_n1") and (
            state.rho_max >= self.cfg.theta
        ):
            expert = self._n1 if self.cfg.variant == "verify_n1" else self._greedy
            return expert.decide(state, forecast)
        return self._network_decision(state, forecast)

    def _network_decision(self, state: GridState, forecast: Injections) -> Decision:
        x = extract_features(
            self.grid,
            state.topology,
            state.injections.gen_p,
            state.injections.load_p,
            state.result.line_flow,
            state.result.loading,
        )
        p = self.model.predict_raw(x)[0]
        sw = nearest_valid_switch(p, self.space, state.topology, self.grid)
        action = switch_to_set(sw, state.topology, self.grid)
        if action.index is None:
            action = dc_replace(action, index=sw.action_index)

        if self.cfg.variant == "naive" or action.is_do_nothing:
            return Decision(action=action, sim_rho=float("nan"), deliberated=True)

        r = simulate(state, action, forecast).rho_max
        worse_than_now = r > state.rho_max
        over_threshold = r > self.cfg.theta
        rejected = (
            (worse_than_now or over_threshold)
            if self.cfg.verify_or
            else (worse_than_now and over_threshold)
        )
        if rejected:
            return Decision(action=DO_NOTHING, sim_rho=float("nan"), deliberated=True)
        return Decision(action=action, sim_rho=float(r), deliberated=True)


def ml_act(
    state: GridState,
    model: TrainedModel,
    space: ActionSpace,
    forecast: Injections,
    cfg: MlAgentConfig = MlAgentConfig(),
    n1cfg: N1Config = N1Config(),
):
    """One-shot form of MlAgent.decide, returning just the chosen action."""
    return MlAgent(model, space, state.grid, cfg, n1cfg).decide(state, forecast).action
