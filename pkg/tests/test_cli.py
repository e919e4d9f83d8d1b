"""Config file parsing and the command line front end.

The pipeline fixture runs the real commands once on a tiny scenario set:
generate, enumerate actions, run the greedy agent, build a dataset, train
a small network. Individual tests then assert on the produced artifacts,
the printed summaries, exit codes (0 success, 1 domain failure, 2 usage
error), and byte-level determinism of regeneration and retraining.
"""

import json

import pytest
from click.testing import CliRunner

from gridtopo.cli import main
from gridtopo.config import ConfigError, RunConfig, describe_schema, load_config
from gridtopo.expert_agents import read_transitions
from gridtopo.mlp import load_model

TRAIN_TOML = """
[train]
hidden_size = 32
hidden_layers = 2
max_epochs = 30
eval_every = 1000
seed = 3

[seeds]
default = 11
benchmark = [0, 1]
"""


# ------------------------------------------------------------------- config

def test_config_defaults_from_empty_file(tmp_path):
    p = tmp_path / "empty.toml"
    p.write_text("")
    assert load_config(p) == RunConfig()


def test_config_full_round_trip(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text(
        """
[paths]
grid = "my_grid.json"
scenarios = "out/scen"

[thresholds]
eta = 0.95
theta = 1.05

[overflow]
soft_steps = 2
hard_threshold = 1.8

[n1]
disable_set = [0, 5]

[gen]
n_scenarios = 7
load_base = [1.5, 2, 3.5, 1, 1, 1, 1, 1, 1, 1, 1]

[train]
learning_rate = 1e-3
seed = 9

[seeds]
default = 4
benchmark = [0, 1, 2]
"""
    )
    cfg = load_config(p)
    assert cfg.grid == "my_grid.json"
    assert cfg.scenarios == "out/scen"
    assert cfg.eta == 0.95 and cfg.theta == 1.05
    assert cfg.overflow.soft_steps == 2
    assert cfg.overflow.hard_threshold == 1.8
    assert cfg.overflow.soft_threshold == 1.0        # untouched default
    assert cfg.n1.disable_set == (0, 5)
    assert cfg.gen.n_scenarios == 7
    assert cfg.gen.load_base == (1.5, 2.0, 3.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    assert cfg.train.learning_rate == 1e-3 and cfg.train.seed == 9
    assert cfg.seeds.default == 4
    assert cfg.seeds.benchmark == (0, 1, 2)


@pytest.mark.parametrize(
    "body,needle",
    [
        ("[nonsense]\nx = 1\n", "[nonsense]"),
        ("[train]\nlearning_rte = 0.1\n", "train.learning_rte"),
        ("[thresholds]\nheta = 1.0\n", "thresholds.heta"),
        ("[paths]\ngird = 'x'\n", "paths.gird"),
        ("[train]\nseed = 'one'\n", "train.seed"),
        ("[train]\nseed = true\n", "train.seed"),
        ("[overflow]\nsoft_threshold = 'hot'\n", "overflow.soft_threshold"),
        ("[n1]\ndisable_set = [1.5]\n", "n1.disable_set"),
        ("[seeds]\nbenchmark = 3\n", "seeds.benchmark"),
        ("not toml [", "not valid TOML"),
    ],
)
def test_config_rejects_with_key_path(tmp_path, body, needle):
    p = tmp_path / "bad.toml"
    p.write_text(body)
    with pytest.raises(ConfigError, match=".*") as err:
        load_config(p)
    assert needle in str(err.value)


def test_config_int_accepted_for_float_not_reverse(tmp_path):
    p = tmp_path / "a.toml"
    p.write_text("[thresholds]\neta = 1\n")
    assert load_config(p).eta == 1.0
    p.write_text("[train]\nbatch_size = 64.5\n")
    with pytest.raises(ConfigError, match="train.batch_size"):
        load_config(p)


def test_schema_description_names_every_section():
    text = describe_schema()
    for section in ("paths", "thresholds", "overflow", "n1", "gen", "train", "seeds"):
        assert f"[{section}]" in text


# ----------------------------------------------------------------- pipeline

@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One full CLI pipeline run; tests assert on the artifacts."""
    root = tmp_path_factory.mktemp("cli")
    runner = CliRunner()
    cfg = root / "run.toml"
    cfg.write_text(TRAIN_TOML)

    def run(*args):
        result = runner.invoke(main, [str(a) for a in args])
        assert result.exit_code == 0, result.output
        return result.output

    out = {}
    out["gen"] = run("gen-scenarios", "--out", root / "scen", "--config", cfg,
                     "--count", 4, "--days", 2, "--ratios", "0.5,0.25,0.25")
    out["actions"] = run("actions", "--out", root / "actions.json")
    out["run"] = run("run-agent", "--agent", "greedy", "--scenarios", root / "scen",
                     "--regime", "full", "--split", "all",
                     "--transitions-out", root / "trans.jsonl",
                     "--results-out", root / "days.json", "--config", cfg)
    out["dataset"] = run("build-dataset", "--transitions", root / "trans.jsonl",
                         "--scenarios", root / "scen", "--out", root / "dataset")
    out["train"] = run("train", "--dataset", root / "dataset",
                       "--out", root / "model.json", "--config", cfg)
    return root, runner, cfg, out


def test_gen_scenarios_artifacts(pipeline):
    root, _, _, out = pipeline
    assert "4 scenarios x 2 days" in out["gen"]
    manifest = json.loads((root / "scen" / "manifest.json").read_text())
    assert len(manifest["scenarios"]) == 4
    assert sorted(
        manifest["split"]["train"] + manifest["split"]["validation"] + manifest["split"]["test"]
    ) == [0, 1, 2, 3]


def test_gen_scenarios_deterministic(pipeline):
    root, runner, cfg, _ = pipeline
    r = runner.invoke(main, ["gen-scenarios", "--out", str(root / "scen_again"),
                             "--config", str(cfg), "--count", "4", "--days", "2",
                             "--ratios", "0.5,0.25,0.25"])
    assert r.exit_code == 0
    for f in sorted((root / "scen").iterdir()):
        assert (root / "scen_again" / f.name).read_bytes() == f.read_bytes()


def test_action_dump_shape(pipeline):
    root, _, _, _ = pipeline
    doc = json.loads((root / "actions.json").read_text())
    assert doc["count"] == len(doc["actions"])
    assert doc["actions"][0]["substation"] is None
    assert all(
        a["index"] == k and len(a["object_index"]) == len(a["busbar"])
        for k, a in enumerate(doc["actions"])
    )


def test_run_agent_artifacts(pipeline):
    root, _, _, out = pipeline
    assert "days completed" in out["run"]
    transitions = read_transitions(root / "trans.jsonl")
    assert transitions and all(t.agent == "greedy" for t in transitions)
    results = json.loads((root / "days.json").read_text())
    assert len(results) == 8                     # 4 scenarios x 2 days
    assert all(r["regime"] == "full" for r in results)


def test_dataset_counts_follow_split(pipeline):
    root, _, _, out = pipeline
    assert "samples" in out["dataset"]
    manifest = json.loads((root / "scen" / "manifest.json").read_text())
    transitions = read_transitions(root / "trans.jsonl")
    # deliberated do-nothings are dropped, the rest keep their split
    kept = [t for t in transitions if t.action_index != 0 and t.day_completed]
    n_train = sum(t.scenario_id in manifest["split"]["train"] for t in kept)
    assert f"train/val/test = {n_train}/" in out["dataset"]


def test_train_reports_and_is_deterministic(pipeline):
    root, runner, cfg, out = pipeline
    assert "best validation accuracy" in out["train"]
    model = load_model(root / "model.json")
    assert model.meta["seed"] == 3
    manifest = json.loads((root / "scen" / "manifest.json").read_text())
    assert sorted(model.meta["train_scenarios"]) == sorted(manifest["split"]["train"])

    r = runner.invoke(main, ["train", "--dataset", str(root / "dataset"),
                             "--out", str(root / "model2.json"), "--config", str(cfg)])
    assert r.exit_code == 0
    assert (root / "model2.json").read_bytes() == (root / "model.json").read_bytes()


def test_eval_model_prints_each_split(pipeline):
    root, runner, _, _ = pipeline
    r = runner.invoke(main, ["eval-model", "--model", str(root / "model.json"),
                             "--dataset", str(root / "dataset"),
                             "--which", "val", "--which", "test"])
    assert r.exit_code == 0
    assert r.output.startswith("val:") and "\ntest:" in r.output
    assert "accuracy" in r.output


def test_benchmark_table_and_json(pipeline):
    root, runner, cfg, _ = pipeline
    r = runner.invoke(main, [
        "benchmark", "--agent", "donothing", "--agent", "greedy",
        "--scenarios", str(root / "scen"), "--regime", "full",
        "--regime", "unplanned", "--seeds", "0,1", "--split", "test",
        "--json-out", str(root / "reports.json"), "--config", str(cfg),
    ])
    assert r.exit_code == 0, r.output
    assert "agent" in r.output and "pct" in r.output
    reports = json.loads((root / "reports.json").read_text())
    assert len(reports) == 4                     # 2 agents x 2 regimes
    by_key = {(d["agent"], d["regime"]): d for d in reports}
    # two opponent seeds on one test scenario with two days
    assert by_key[("donothing", "unplanned")]["attempted"] == 4
    assert by_key[("greedy", "full")]["attempted"] == 2
    assert by_key[("greedy", "full")]["completion_pct"] >= by_key[
        ("donothing", "full")
    ]["completion_pct"]


def test_benchmark_refuses_training_scenarios_for_ml(pipeline):
    root, runner, _, _ = pipeline
    r = runner.invoke(main, [
        "benchmark", "--agent", "verify", "--model", str(root / "model.json"),
        "--scenarios", str(root / "scen"), "--regime", "full", "--split", "train",
    ])
    assert r.exit_code == 1
    assert "training split" in r.output


def test_latency_reports_microseconds(pipeline):
    root, runner, _, _ = pipeline
    r = runner.invoke(main, ["latency", "--agent", "greedy",
                             "--scenarios", str(root / "scen"), "--days", "3"])
    assert r.exit_code == 0, r.output
    assert "us/decision" in r.output and "single-threaded" in r.output


def test_analyze_actions_and_confusion_and_overlap(pipeline):
    root, runner, _, _ = pipeline
    r = runner.invoke(main, ["analyze", "actions", "--transitions",
                             str(root / "trans.jsonl"), "--top", "3"])
    assert r.exit_code == 0
    assert "distinct actions" in r.output and "substation" in r.output

    r = runner.invoke(main, ["analyze", "confusion", "--model", str(root / "model.json"),
                             "--dataset", str(root / "dataset"),
                             "--out", str(root / "conf.csv")])
    assert r.exit_code == 0, r.output
    assert (root / "conf.csv").read_text().startswith("pc1,pc2,class,confused")

    r = runner.invoke(main, ["analyze", "nn-overlap", "--model", str(root / "model.json"),
                             "--dataset", str(root / "dataset"), "--sample-size", "10"])
    assert r.exit_code == 0, r.output
    assert "same-class neighbor fraction" in r.output


# --------------------------------------------------------------- exit codes

def test_help_lists_every_subcommand():
    r = CliRunner().invoke(main, ["--help"])
    assert r.exit_code == 0
    for name in ("gen-scenarios", "actions", "run-agent", "build-dataset", "train",
                 "eval-model", "benchmark", "latency", "analyze", "serve"):
        assert name in r.output


def test_usage_errors_exit_2(pipeline):
    root, runner, _, _ = pipeline
    r = runner.invoke(main, ["run-agent", "--agent", "zen",
                             "--scenarios", str(root / "scen")])
    assert r.exit_code == 2
    r = runner.invoke(main, ["run-agent", "--agent", "greedy",
                             "--scenarios", str(root / "scen"), "--regime", "sideways"])
    assert r.exit_code == 2
    r = runner.invoke(main, ["run-agent", "--agent", "naive",
                             "--scenarios", str(root / "scen")])
    assert r.exit_code == 2 and "--model" in r.output
    r = runner.invoke(main, ["benchmark", "--agent", "greedy",
                             "--scenarios", str(root / "missing")])
    assert r.exit_code == 2


def test_domain_errors_exit_1(pipeline, tmp_path):
    root, runner, _, _ = pipeline
    bad = tmp_path / "bad.toml"
    bad.write_text("[train]\nlearning_rte = 0.1\n")
    r = runner.invoke(main, ["train", "--dataset", str(root / "dataset"),
                             "--out", str(tmp_path / "m.json"), "--config", str(bad)])
    assert r.exit_code == 1
    assert "train.learning_rte" in r.output


def test_config_schema_command():
    r = CliRunner().invoke(main, ["config-schema"])
    assert r.exit_code == 0
    assert "[train]" in r.output and "[seeds]" in r.output
