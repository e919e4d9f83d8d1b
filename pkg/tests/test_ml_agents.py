"""Model-driven operators.

What is proven here:

1. Config and wiring: variant names and thresholds are validated, a model
   whose shapes do not fit the grid is rejected, and the contingency hybrid
   carries a greedy-hybrid twin for outage windows.
2. The shared activity gate: below eta every variant stands pat without
   deliberating.
3. The naive variant always returns a decodable member of the enumerated
   action space, whatever the network happens to emit.
4. The verify rule: improving candidates pass through untouched, candidates
   that are worse than the present state AND beyond the risk threshold are
   replaced by do-nothing, and the disjunctive flag tightens that to either
   bound alone.
5. Hybrid handoff: below the risk threshold the hybrids act exactly like
   verify; at or above it their decisions coincide with the corresponding
   expert's on the same state.
6. Simulation budgets, counted by intercepting the simulator: naive spends
   zero calls, verify at most one, and the hybrids only pay expert prices
   in the risky branch.
"""

import math

import numpy as np
import pytest

import gridtopo.expert_agents as expert_agents
import gridtopo.ml_agents as ml_agents
from gridtopo.action_space import build_action_space, set_to_switch
from gridtopo.expert_agents import (
    AgentConfig,
    GreedyAgent,
    N1Agent,
    N1Config,
    _action_rhos,
    parse_regime,
    run_day,
)
from gridtopo.grid_model import (
    apply_set_action,
    build_reference_grid,
    default_topology,
)
from gridtopo.imitation import feature_size
from gridtopo.mlp import Mlp, TrainedModel
from gridtopo.imitation import NormStats
from gridtopo.ml_agents import MlAgent, MlAgentConfig, ml_act
from gridtopo.power_flow import Injections, make_state
from gridtopo.scenarios import GenConfig, days, generate_scenario

from test_expert_agents import _balanced_injections


@pytest.fixture(scope="module")
def grid():
    return build_reference_grid()


@pytest.fixture(scope="module")
def space(grid):
    return build_action_space(grid)


def _identity_norm(grid):
    n = feature_size(grid)
    return NormStats(mean=np.zeros(n), std=np.ones(n))


@pytest.fixture(scope="module")
def rand_model(grid):
    """Untrained network: the safety properties may not depend on weights."""
    rng = np.random.default_rng(7)
    sizes = [feature_size(grid), 64, 64, grid.n_objects]
    return TrainedModel(
        mlp=Mlp.create(sizes, leak=0.1, rng=rng), norm=_identity_norm(grid), meta={}
    )


def _pinned_model(grid, bits):
    """Network that outputs ~0.95 on the given switch bits and ~0.05 elsewhere
    regardless of input: zero weights, the last bias carries the pattern."""
    sizes = [feature_size(grid), 8, grid.n_objects]
    weights = [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(s) for s in sizes[1:]]
    biases[-1][:] = -3.0
    biases[-1][np.asarray(bits, dtype=bool)] = 3.0
    return TrainedModel(
        mlp=Mlp(weights, biases, leak=0.1), norm=_identity_norm(grid), meta={}
    )


def _state_in_band(grid, lo, hi):
    for factor in np.arange(0.8, 3.0, 0.01):
        inj = _balanced_injections(factor)
        state = make_state(grid, default_topology(grid), inj)
        if lo <= state.rho_max < hi:
            return state
    raise AssertionError(f"no balanced state with rho_max in [{lo}, {hi})")


@pytest.fixture(scope="module")
def quiet(grid):
    return _state_in_band(grid, 0.85, 0.95)


@pytest.fixture(scope="module")
def active(grid):
    # inside the activity gate but below the risk threshold
    return _state_in_band(grid, 0.97, 0.995)


@pytest.fixture(scope="module")
def risky(grid):
    return _state_in_band(grid, 1.0, 1.3)


def _pin_target(space, grid, topo, wanted):
    """First candidate whose own switch encoding decodes back to itself,
    so the pinned network unambiguously selects it."""
    from gridtopo.action_space import nearest_valid_switch

    for k in wanted:
        bits = set_to_switch(space.actions[k], topo, grid).bits
        if not bits.any():
            continue
        probe = np.where(bits > 0, 0.95, 0.05)
        if nearest_valid_switch(probe, space, topo, grid).action_index == k:
            return k, bits
    raise AssertionError("no unambiguous pin target among the candidates")


# ------------------------------------------------------------ config, wiring

def test_config_validation():
    MlAgentConfig()
    with pytest.raises(ValueError):
        MlAgentConfig(variant="bold")
    with pytest.raises(ValueError):
        MlAgentConfig(eta=0.0)
    with pytest.raises(ValueError):
        MlAgentConfig(eta=1.05, theta=1.0)


def test_model_shape_mismatch_rejected(grid, space, rand_model):
    short_norm = NormStats(mean=np.zeros(10), std=np.ones(10))
    bad = TrainedModel(mlp=rand_model.mlp, norm=short_norm, meta={})
    with pytest.raises(ValueError, match="features"):
        MlAgent(bad, space, grid)

    rng = np.random.default_rng(0)
    wrong_out = Mlp.create([feature_size(grid), 16, grid.n_objects + 3], 0.1, rng)
    bad = TrainedModel(mlp=wrong_out, norm=_identity_norm(grid), meta={})
    with pytest.raises(ValueError, match="outputs"):
        MlAgent(bad, space, grid)


def test_outage_twin_wiring(grid, space, rand_model):
    for variant in ("naive", "verify", "verify_greedy"):
        agent = MlAgent(rand_model, space, grid, MlAgentConfig(variant=variant))
        assert agent.during_outage is None
    vn1 = MlAgent(rand_model, space, grid, MlAgentConfig(variant="verify_n1"))
    assert vn1.during_outage is not None
    assert vn1.during_outage.name == "verify_greedy"
    assert vn1.during_outage.model is rand_model


# ------------------------------------------------------------- activity gate

def test_quiet_state_stands_pat_every_variant(grid, space, rand_model, quiet):
    for variant in ml_agents.VARIANTS:
        agent = MlAgent(rand_model, space, grid, MlAgentConfig(variant=variant))
        d = agent.decide(quiet, quiet.injections)
        assert d.action.is_do_nothing
        assert not d.deliberated


# ----------------------------------------------------------------- naive

def test_naive_always_returns_space_member(grid, space, rand_model, active, risky):
    agent = MlAgent(rand_model, space, grid, MlAgentConfig(variant="naive"))
    sc = generate_scenario(grid, GenConfig(), seed=3, scenario_id=0)
    day = next(days(sc))
    states = [active, risky] + [
        make_state(
            grid,
            default_topology(grid),
            Injections(gen_p=day.gen_p[t], load_p=day.load_p[t]),
        )
        for t in range(0, 288, 48)
    ]
    deliberated = 0
    for st in states:
        d = agent.decide(st, st.injections)
        if not d.deliberated:
            continue
        deliberated += 1
        assert d.action.index is not None
        assert 0 <= d.action.index < len(space.actions)
        want = apply_set_action(st.topology, grid, space.actions[d.action.index])
        got = apply_set_action(st.topology, grid, d.action)
        assert np.array_equal(want, got)
    assert deliberated >= 2    # the band fixtures are above the gate


# ----------------------------------------------------------------- verify

def test_verify_accepts_improving_candidate(grid, space, active):
    rhos = _action_rhos(active, space, active.injections)
    improving = [k for k in range(1, len(rhos)) if rhos[k] < active.rho_max]
    assert improving, "calibration should leave room to improve"
    k, bits = _pin_target(space, grid, active.topology, improving)
    agent = MlAgent(_pinned_model(grid, bits), space, grid, MlAgentConfig(variant="verify"))
    d = agent.decide(active, active.injections)
    assert d.action.index == k
    assert d.sim_rho == pytest.approx(rhos[k])


def test_verify_rejects_worsening_candidate_over_threshold(grid, space, risky):
    rhos = _action_rhos(risky, space, risky.injections)
    worsening = [
        k for k in range(1, len(rhos)) if rhos[k] > max(risky.rho_max, 1.0)
    ]
    assert worsening, "a risky state must have actions that hurt"
    k, bits = _pin_target(space, grid, risky.topology, worsening)
    agent = MlAgent(_pinned_model(grid, bits), space, grid, MlAgentConfig(variant="verify"))
    d = agent.decide(risky, risky.injections)
    assert d.action.is_do_nothing
    assert d.deliberated
    assert math.isnan(d.sim_rho)


def test_verify_or_flag_tightens_the_rule(grid, space, active):
    # worse than today yet under the risk threshold: the default conjunctive
    # rule lets it through, the disjunctive variant blocks it
    rhos = _action_rhos(active, space, active.injections)
    mild = [
        k
        for k in range(1, len(rhos))
        if active.rho_max < rhos[k] <= 1.0
    ]
    assert mild, "expected mildly worsening candidates below threshold"
    k, bits = _pin_target(space, grid, active.topology, mild)
    model = _pinned_model(grid, bits)

    keep = MlAgent(model, space, grid, MlAgentConfig(variant="verify"))
    d = keep.decide(active, active.injections)
    assert d.action.index == k

    strict = MlAgent(model, space, grid, MlAgentConfig(variant="verify", verify_or=True))
    d = strict.decide(active, active.injections)
    assert d.action.is_do_nothing and d.deliberated


# ----------------------------------------------------------------- hybrids

def test_hybrids_below_threshold_equal_verify(grid, space, active):
    rhos = _action_rhos(active, space, active.injections)
    candidates = [k for k in range(1, len(rhos)) if np.isfinite(rhos[k])]
    k, bits = _pin_target(space, grid, active.topology, candidates)
    model = _pinned_model(grid, bits)
    reference = MlAgent(model, space, grid, MlAgentConfig(variant="verify")).decide(
        active, active.injections
    )
    for variant in ("verify_greedy", "verify_n1"):
        d = MlAgent(model, space, grid, MlAgentConfig(variant=variant)).decide(
            active, active.injections
        )
        assert d.action == reference.action
        assert (d.sim_rho == pytest.approx(reference.sim_rho)) or (
            math.isnan(d.sim_rho) and math.isnan(reference.sim_rho)
        )


def test_verify_greedy_matches_expert_when_risky(grid, space, rand_model, risky):
    expert = GreedyAgent(space, AgentConfig()).decide(risky, risky.injections)
    d = MlAgent(rand_model, space, grid, MlAgentConfig(variant="verify_greedy")).decide(
        risky, risky.injections
    )
    assert d.action == expert.action
    assert d.sim_rho == pytest.approx(expert.sim_rho)


def test_verify_n1_matches_expert_when_risky(grid, space, rand_model, risky):
    expert = N1Agent(space, AgentConfig(), N1Config()).decide(risky, risky.injections)
    d = MlAgent(rand_model, space, grid, MlAgentConfig(variant="verify_n1")).decide(
        risky, risky.injections
    )
    assert d.action == expert.action
    assert d.sim_rho == pytest.approx(expert.sim_rho)


# ------------------------------------------------------- simulation budgets

class _SimMeter:
    def __init__(self):
        self.calls = 0

    def install(self, monkeypatch):
        for mod, names in (
            (ml_agents, ("simulate",)),
            (expert_agents, ("simulate", "simulate_with_line_out")),
        ):
            for name in names:
                real = getattr(mod, name)

                def counted(*args, _real=real, **kwargs):
                    self.calls += 1
                    return _real(*args, **kwargs)

                monkeypatch.setattr(mod, name, counted)


def test_simulation_budgets(grid, space, rand_model, active, risky, monkeypatch):
    n1cfg = N1Config()
    rhos = _action_rhos(risky, space, risky.injections)
    n_secure = int(np.sum(rhos < 1.0))
    n_contingencies = len(n1cfg.disable_set)    # all enabled in these states

    meter = _SimMeter()
    meter.install(monkeypatch)

    def spent(agent, state):
        before = meter.calls
        agent.decide(state, state.injections)
        return meter.calls - before

    naive = MlAgent(rand_model, space, grid, MlAgentConfig(variant="naive"))
    assert spent(naive, active) == 0

    verify = MlAgent(rand_model, space, grid, MlAgentConfig(variant="verify"))
    assert spent(verify, active) <= 1

    vg = MlAgent(rand_model, space, grid, MlAgentConfig(variant="verify_greedy"))
    cost = spent(vg, risky)
    assert 1 <= cost <= len(space.actions)

    vn1 = MlAgent(rand_model, space, grid, MlAgentConfig(variant="verify_n1"))
    cost = spent(vn1, risky)
    assert cost <= len(space.actions) + n_secure * n_contingencies


# ------------------------------------------------------------- end to end

def test_ml_act_one_shot_matches_agent(grid, space, rand_model, active):
    cfg = MlAgentConfig(variant="verify")
    via_agent = MlAgent(rand_model, space, grid, cfg).decide(active, active.injections)
    assert ml_act(active, rand_model, space, active.injections, cfg) == via_agent.action


def test_run_day_accepts_ml_agent(grid, space, rand_model):
    sc = generate_scenario(grid, GenConfig(), seed=3, scenario_id=0)
    day = next(days(sc))
    agent = MlAgent(rand_model, space, grid, MlAgentConfig(variant="verify"))
    result, transitions = run_day(agent, day, parse_regime("full"), grid=grid)
    assert result.agent == "verify"
    assert all(t.agent in ("verify",) for t in transitions)
