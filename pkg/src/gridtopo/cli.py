"""Command line front end.

Each subcommand is a thin adapter over one module operation; nothing here
computes anything itself.  Exit codes: 0 success, 1 domain failure (bad
inputs, failed validation, missing files), 2 usage error (unknown flags,
malformed flag values).  Every source of randomness is seeded from an
explicit --seed or the [seeds] section of the config file.
"""

from __future__ import annotations

import functools
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import click

from .action_space import build_action_space
from .config import ConfigError, RunConfig, describe_schema, load_config
from .evaluation import (
    action_distribution,
    benchmark,
    confusion_analysis,
    format_reports,
    measure_latency,
    nn_overlap,
    report_to_json,
    run_days,
    write_confusion_csv,
)
from .expert_agents import (
    AgentConfig,
    DoNothingAgent,
    GreedyAgent,
    N1Agent,
    N1Config,
    parse_regime,
    read_transitions,
    write_transitions,
)
from .grid_model import build_reference_grid, load_grid
from .imitation import TEST, TRAIN, VAL, build_dataset, read_dataset, write_dataset
from .ml_agents import MlAgent, MlAgentConfig
from .mlp import accuracy_report, load_model, save_model, train
from .power_flow import OverflowRules
from .scenarios import generate_scenarios, read_scenario_set, split_scenarios, write_scenario_set

EXPERT_NAMES = ("donothing", "greedy", "n1")
ML_NAMES = ("naive", "verify", "verify-greedy", "verify-n1")
AGENT_NAMES = EXPERT_NAMES + ML_NAMES
WHICH = {"train": TRAIN, "val": VAL, "test": TEST}


def _domain_errors(fn):
    """Convert domain failures into exit code 1 with the message on stderr."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, ValueError, OSError) as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _csv_ints(ctx, param, value):
    if value is None:
        return None
    try:
        return tuple(int(v) for v in str(value).split(","))
    except ValueError:
        raise click.BadParameter(f"{value!r} is not a comma-separated integer list")


def _csv_floats(ctx, param, value):
    if value is None:
        return None
    try:
        return tuple(float(v) for v in str(value).split(","))
    except ValueError:
        raise click.BadParameter(f"{value!r} is not a comma-separated number list")


def _regime_value(ctx, param, value):
    values = value if isinstance(value, tuple) else (value,)
    for v in values:
        if v == "unplanned":
            continue            # expands over --seeds downstream
        try:
            parse_regime(v)
        except ValueError as exc:
            raise click.BadParameter(str(exc))
    return value


def _load_cfg(config_path) -> RunConfig:
    return load_config(config_path) if config_path else RunConfig()


def _pick(flag, cfg_value):
    return cfg_value if flag is None else flag


def _grid_for(cfg: RunConfig, grid_flag):
    path = _pick(grid_flag, cfg.grid)
    return load_grid(path) if path else build_reference_grid()


def _rules_for(cfg: RunConfig, soft_steps, hard_threshold) -> OverflowRules:
    rules = cfg.overflow
    if soft_steps is not None:
        rules = replace(rules, soft_steps=soft_steps)
    if hard_threshold is not None:
        rules = replace(rules, hard_threshold=hard_threshold)
    return rules


def _build_agent(name, *, space, grid, cfg: RunConfig, model_path, eta, theta, verify_or):
    eta = _pick(eta, cfg.eta)
    theta = _pick(theta, cfg.theta)
    if name == "donothing":
        return DoNothingAgent()
    if name == "greedy":
        return GreedyAgent(space, AgentConfig(eta=eta, theta=theta))
    if name == "n1":
        return N1Agent(space, AgentConfig(eta=eta, theta=theta), cfg.n1)
    if model_path is None:
        raise click.UsageError(f"agent {name!r} needs --model")
    model = load_model(model_path)
    variant = name.replace("-", "_")
    return MlAgent(
        model, space, grid,
        MlAgentConfig(variant=variant, eta=eta, theta=theta, verify_or=verify_or),
        cfg.n1,
    )


def _filter_split(scenarios, split, which: str):
    if which == "all":
        return scenarios
    wanted = set(getattr(split, "validation" if which == "val" else which))
    picked = [s for s in scenarios if s.id in wanted]
    if not picked:
        raise click.ClickException(f"no scenarios in the {which!r} split")
    return picked


@click.group()
def main():
    """Topology-control workbench for a small transmission grid."""


# ------------------------------------------------------------------- config

@main.command("config-schema")
def config_schema():
    """Print the accepted config-file sections, keys and defaults."""
    click.echo(describe_schema())


# ---------------------------------------------------------------- scenarios

@main.command("gen-scenarios")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--seed", type=int, default=None, help="Generation seed (also seeds the split).")
@click.option("--count", type=int, default=None, help="Number of scenarios.")
@click.option("--days", type=int, default=None, help="Days per scenario.")
@click.option("--ratios", callback=_csv_floats, default=None,
              help="train,val,test split ratios, e.g. 0.7,0.1,0.2")
@click.option("--grid", "grid_flag", type=click.Path(exists=True, path_type=Path))
@_domain_errors
def gen_scenarios(out, config_path, seed, count, days, ratios, grid_flag):
    """Generate an injection scenario set and write it with its manifest."""
    cfg = _load_cfg(config_path)
    grid = _grid_for(cfg, grid_flag)
    gen = cfg.gen
    if count is not None:
        gen = replace(gen, n_scenarios=count)
    if days is not None:
        gen = replace(gen, n_days=days)
    seed = _pick(seed, cfg.seeds.default)
    scenarios = generate_scenarios(grid, gen, seed)
    split = split_scenarios([s.id for s in scenarios], ratios or (0.7, 0.1, 0.2), seed)
    write_scenario_set(out, scenarios, split, gen, seed)
    click.echo(
        f"wrote {len(scenarios)} scenarios x {gen.n_days} days to {out} "
        f"(train/val/test = {len(split.train)}/{len(split.validation)}/{len(split.test)})"
    )


# ------------------------------------------------------------------ actions

@main.command("actions")
@click.option("--out", type=click.Path(path_type=Path), default=None,
              help="Write the table as JSON; default prints a summary.")
@click.option("--exclude-lone-endpoint", is_flag=True, default=False,
              help="Also forbid busbars holding a single line endpoint.")
@click.option("--grid", "grid_flag", type=click.Path(exists=True, path_type=Path))
@_domain_errors
def actions_cmd(out, exclude_lone_endpoint, grid_flag):
    """Enumerate the valid unique set-action table."""
    grid = _grid_for(RunConfig(), grid_flag)
    space = build_action_space(grid, exclude_lone_endpoint=exclude_lone_endpoint)
    if out is None:
        per_sub = {s: len(v) for s, v in sorted(space.per_substation.items())}
        click.echo(f"{len(space.actions)} actions (incl. explicit do-nothing)")
        for sub, n in per_sub.items():
            click.echo(f"  substation {sub:2d}: {n} configurations")
        return
    doc = {
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
    out.write_text(json.dumps(doc, indent=1))
    click.echo(f"wrote {doc['count']} actions to {out}")


# ---------------------------------------------------------------- run-agent

def _common_run_options(fn):
    fn = click.option("--scenarios", "scenario_dir", required=True,
                      type=click.Path(exists=True, path_type=Path))(fn)
    fn = click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))(fn)
    fn = click.option("--grid", "grid_flag", type=click.Path(exists=True, path_type=Path))(fn)
    fn = click.option("--model", "model_path", type=click.Path(exists=True, path_type=Path))(fn)
    fn = click.option("--eta", type=float, default=None, help="Risk gate on forecast max loading.")(fn)
    fn = click.option("--theta", type=float, default=None, help="Operational loading threshold.")(fn)
    fn = click.option("--verify-or", is_flag=True, default=False,
                      help="Reject a proposal when it worsens OR overloads (default: AND).")(fn)
    fn = click.option("--soft-steps", type=int, default=None)(fn)
    fn = click.option("--hard-threshold", type=float, default=None)(fn)
    fn = click.option("--jobs", type=int, default=1, show_default=True)(fn)
    return fn


@main.command("run-agent")
@click.option("--agent", "agent_name", required=True, type=click.Choice(AGENT_NAMES))
@click.option("--regime", default="full", callback=_regime_value, show_default=True,
              help='"full", "planned:LINE", "unplanned:SEED", or bare '
                   '"unplanned" to sweep --seeds.')
@click.option("--seeds", callback=_csv_ints, default=None,
              help="Opponent seeds for unplanned regimes, e.g. 0,1,2.")
@click.option("--split", "split_name", default="all", show_default=True,
              type=click.Choice(["train", "val", "test", "all"]))
@click.option("--transitions-out", type=click.Path(path_type=Path), default=None,
              help="Write deliberated decisions as JSON lines.")
@click.option("--results-out", type=click.Path(path_type=Path), default=None,
              help="Write per-day results as JSON.")
@_common_run_options
@_domain_errors
def run_agent(agent_name, regime, seeds, split_name, transitions_out, results_out,
              scenario_dir, config_path, grid_flag, model_path, eta, theta,
              verify_or, soft_steps, hard_threshold, jobs):
    """Run one agent over a scenario set and record days and transitions."""
    cfg = _load_cfg(config_path)
    grid = _grid_for(cfg, grid_flag)
    space = build_action_space(grid)
    agent = _build_agent(agent_name, space=space, grid=grid, cfg=cfg,
                         model_path=model_path, eta=eta, theta=theta, verify_or=verify_or)
    scenarios, split, _ = read_scenario_set(scenario_dir)
    scenarios = _filter_split(scenarios, split, split_name)
    rules = _rules_for(cfg, soft_steps, hard_threshold)
    results, transitions = run_days(
        agent, scenarios, regime, grid=grid,
        seeds=seeds or cfg.seeds.benchmark, rules=rules, jobs=jobs,
    )
    done = sum(r.completed for r in results)
    click.echo(
        f"{agent.name} [{regime}]: {done}/{len(results)} days completed, "
        f"{sum(r.n_actions for r in results)} actions, "
        f"{len(transitions)} recorded transitions"
    )
    if transitions_out is not None:
        n = write_transitions(transitions_out, transitions)
        click.echo(f"wrote {n} transitions to {transitions_out}")
    if results_out is not None:
        results_out.write_text(json.dumps([asdict(r) for r in results], indent=1))
        click.echo(f"wrote {len(results)} day results to {results_out}")


# ------------------------------------------------------------------ dataset

@main.command("build-dataset")
@click.option("--transitions", "transition_files", required=True, multiple=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--scenarios", "scenario_dir", required=True,
              type=click.Path(exists=True, path_type=Path),
              help="Scenario set whose manifest supplies the split assignment.")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--exclude-lone-endpoint", is_flag=True, default=False)
@click.option("--grid", "grid_flag", type=click.Path(exists=True, path_type=Path))
@_domain_errors
def build_dataset_cmd(transition_files, scenario_dir, out, exclude_lone_endpoint, grid_flag):
    """Turn recorded transitions into a feature/target imitation dataset."""
    grid = _grid_for(RunConfig(), grid_flag)
    space = build_action_space(grid, exclude_lone_endpoint=exclude_lone_endpoint)
    transitions = []
    for path in transition_files:
        transitions.extend(read_transitions(path))
    _, split, _ = read_scenario_set(scenario_dir)
    dataset = build_dataset(transitions, grid, space, split)
    write_dataset(out, dataset)
    counts = {
        name: int((dataset.split == code).sum())
        for name, code in (("train", TRAIN), ("val", VAL), ("test", TEST))
    }
    click.echo(
        f"dataset: {len(dataset.x)} samples "
        f"(train/val/test = {counts['train']}/{counts['val']}/{counts['test']}) -> {out}"
    )


# ----------------------------------------------------------------- training

@main.command("train")
@click.option("--dataset", "dataset_dir", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--seed", type=int, default=None, help="Overrides [train].seed.")
@click.option("--grid", "grid_flag", type=click.Path(exists=True, path_type=Path))
@_domain_errors
def train_cmd(dataset_dir, out, config_path, seed, grid_flag):
    """Train the switching-advice network on an imitation dataset."""
    cfg = _load_cfg(config_path)
    grid = _grid_for(cfg, grid_flag)
    dataset = read_dataset(dataset_dir)
    tcfg = cfg.train if seed is None else replace(cfg.train, seed=seed)
    model, history = train(dataset, grid, tcfg)
    save_model(out, model)
    acc = model.meta.get("best_val_accuracy")
    acc_text = "n/a (no validation samples)" if acc is None else f"{acc:.3f}"
    click.echo(
        f"trained {history.iterations} iterations, "
        f"best validation accuracy {acc_text} -> {out}"
    )


@main.command("eval-model")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--dataset", "dataset_dir", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--which", multiple=True, type=click.Choice(sorted(WHICH)),
              default=("val", "test"), show_default=True)
@click.option("--grid", "grid_flag", type=click.Path(exists=True, path_type=Path))
@_domain_errors
def eval_model(model_path, dataset_dir, which, grid_flag):
    """Report prediction accuracy of a trained model per dataset split."""
    grid = _grid_for(RunConfig(), grid_flag)
    space = build_action_space(grid)
    model = load_model(model_path)
    dataset = read_dataset(dataset_dir)
    for name in which:
        report = accuracy_report(model, dataset, WHICH[name], space, grid)
        parts = ", ".join(f"{k}={v:.3f}" if isinstance(v, float) else f"{k}={v}"
                          for k, v in report.items())
        click.echo(f"{name}: {parts}")


# --------------------------------------------------------------- evaluation

@main.command("benchmark")
@click.option("--agent", "agent_names", required=True, multiple=True,
              type=click.Choice(AGENT_NAMES))
@click.option("--regime", "regimes", multiple=True, default=("full",),
              callback=_regime_value, show_default=True)
@click.option("--seeds", callback=_csv_ints, default=None)
@click.option("--split", "split_name", default="test", show_default=True,
              type=click.Choice(["train", "val", "test", "all"]))
@click.option("--json-out", type=click.Path(path_type=Path), default=None)
@_common_run_options
@_domain_errors
def benchmark_cmd(agent_names, regimes, seeds, split_name, json_out,
                  scenario_dir, config_path, grid_flag, model_path, eta, theta,
                  verify_or, soft_steps, hard_threshold, jobs):
    """Completion-rate comparison of agents across operating regimes."""
    cfg = _load_cfg(config_path)
    grid = _grid_for(cfg, grid_flag)
    space = build_action_space(grid)
    scenarios, split, _ = read_scenario_set(scenario_dir)
    scenarios = _filter_split(scenarios, split, split_name)
    rules = _rules_for(cfg, soft_steps, hard_threshold)
    reports = []
    for name in agent_names:
        agent = _build_agent(name, space=space, grid=grid, cfg=cfg,
                             model_path=model_path, eta=eta, theta=theta, verify_or=verify_or)
        for regime in regimes:
            reports.append(benchmark(
                agent, scenarios, regime, grid=grid,
                seeds=seeds or cfg.seeds.benchmark, rules=rules, jobs=jobs,
            ))
    click.echo(format_reports(reports))
    if json_out is not None:
        json_out.write_text("[" + ",\n".join(report_to_json(r) for r in reports) + "]")
        click.echo(f"wrote {len(reports)} reports to {json_out}")


@main.command("latency")
@click.option("--agent", "agent_name", required=True, type=click.Choice(AGENT_NAMES))
@click.option("--days", "n_days", type=int, default=10, show_default=True,
              help="Day budget; the first day warms caches and is discarded.")
@click.option("--regime", default="full", callback=_regime_value, show_default=True)
@_common_run_options
@_domain_errors
def latency_cmd(agent_name, n_days, regime, scenario_dir, config_path, grid_flag,
                model_path, eta, theta, verify_or, soft_steps, hard_threshold, jobs):
    """Measure single-threaded decision latency of an agent."""
    cfg = _load_cfg(config_path)
    grid = _grid_for(cfg, grid_flag)
    space = build_action_space(grid)
    agent = _build_agent(agent_name, space=space, grid=grid, cfg=cfg,
                         model_path=model_path, eta=eta, theta=theta, verify_or=verify_or)
    scenarios, _, _ = read_scenario_set(scenario_dir)
    rules = _rules_for(cfg, soft_steps, hard_threshold)
    report = measure_latency(agent, scenarios, n_days, grid=grid, regime=regime, rules=rules)
    click.echo(
        f"{report.agent}: {report.mean_us:.0f} us/decision over "
        f"{report.samples} deliberated decisions ({report.environment})"
    )


# ----------------------------------------------------------------- analysis

@main.group("analyze")
def analyze():
    """Post-hoc analyses of recorded runs and trained models."""


@analyze.command("actions")
@click.option("--transitions", "transition_files", required=True, multiple=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--top", type=int, default=15, show_default=True)
@click.option("--json-out", type=click.Path(path_type=Path), default=None)
@click.option("--grid", "grid_flag", type=click.Path(exists=True, path_type=Path))
@_domain_errors
def analyze_actions(transition_files, top, json_out, grid_flag):
    """Frequency profile of the actions an agent actually took."""
    grid = _grid_for(RunConfig(), grid_flag)
    space = build_action_space(grid)
    transitions = []
    for path in transition_files:
        transitions.extend(read_transitions(path))
    freq = action_distribution(transitions, space)
    order = freq.argsort()[::-1]
    click.echo(f"{len(transitions)} transitions, {int((freq > 0).sum())} distinct actions")
    for k in order[:top]:
        if freq[k] == 0:
            break
        a = space.actions[k]
        where = "do-nothing" if a.substation is None else f"substation {a.substation}"
        click.echo(f"  action {k:3d} ({where}): {freq[k]:.3f}")
    if json_out is not None:
        json_out.write_text(json.dumps({"frequency": freq.tolist()}))
        click.echo(f"wrote frequencies to {json_out}")


@analyze.command("confusion")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--dataset", "dataset_dir", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--which", type=click.Choice(sorted(WHICH)), default=None,
              help="Restrict to one split; default uses every sample.")
@click.option("--out", type=click.Path(path_type=Path), default=None,
              help="Write the 2D projection as CSV.")
@click.option("--grid", "grid_flag", type=click.Path(exists=True, path_type=Path))
@_domain_errors
def analyze_confusion(model_path, dataset_dir, which, out, grid_flag):
    """Find action classes the model mixes up, with a 2D feature projection."""
    grid = _grid_for(RunConfig(), grid_flag)
    space = build_action_space(grid)
    model = load_model(model_path)
    dataset = read_dataset(dataset_dir)
    analysis = confusion_analysis(model, dataset, space, grid,
                                  which=None if which is None else WHICH[which])
    if not analysis.pairs:
        click.echo("no confused class pairs")
    for a, b, n in analysis.pairs:
        click.echo(f"  {a} -> {b}: {n} samples")
    if out is not None:
        write_confusion_csv(out, analysis)
        click.echo(f"wrote projection to {out}")


@analyze.command("nn-overlap")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--dataset", "dataset_dir", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--which", type=click.Choice(sorted(WHICH)), default=None)
@click.option("--sample-size", type=int, default=2500, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--grid", "grid_flag", type=click.Path(exists=True, path_type=Path))
@_domain_errors
def analyze_nn(model_path, dataset_dir, which, sample_size, seed, grid_flag):
    """Relate prediction accuracy to feature-space nearest-neighbor class."""
    grid = _grid_for(RunConfig(), grid_flag)
    space = build_action_space(grid)
    model = load_model(model_path)
    dataset = read_dataset(dataset_dir)
    r = nn_overlap(model, dataset, space, grid,
                   which=None if which is None else WHICH[which],
                   sample_size=sample_size, seed=seed)
    click.echo(f"n={r.n} same-class neighbor fraction={r.same_class_fraction:.3f}")
    click.echo(f"accuracy when neighbor shares the class:  {r.same_class_accuracy:.3f}")
    click.echo(f"accuracy when it does not:                {r.diff_class_accuracy:.3f}")


# ------------------------------------------------------------------- server

@main.command("serve")
@click.option("--scenarios", "scenario_dir", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--model", "model_path", type=click.Path(exists=True, path_type=Path))
@click.option("--grid", "grid_flag", type=click.Path(exists=True, path_type=Path))
@click.option("--console", "console_dir",
              type=click.Path(exists=True, file_okay=False, path_type=Path),
              help="Built console bundle to serve at / (e.g. frontend/dist).")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8321, show_default=True)
@_domain_errors
def serve(scenario_dir, model_path, grid_flag, console_dir, host, port):
    """Serve the session API and push channel for the operator console."""
    import uvicorn

    from .service import create_app

    grid = _grid_for(RunConfig(), grid_flag)
    app = create_app(scenario_dir, grid=grid,
                     model_path=None if model_path is None else str(model_path),
                     console_dir=console_dir)
    click.echo(f"serving on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    sys.exit(main())
