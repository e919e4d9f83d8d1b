"""Benchmarks over whole regimes and the model-analysis toolbox.

The benchmark runs an agent across every day of the given scenarios under
one regime and reduces the outcomes to a completion report; unplanned
regimes are repeated per opponent seed with a per-seed breakdown.  Latency
is measured separately, strictly sequentially, over the decision timings
the runner already collects.  The analysis half works on transition logs
and trained models: action-frequency distributions and their cosine
distances, a confusion breakdown with a two-component PCA projection for
plotting, and model accuracy conditioned on nearest-neighbor agreement.
"""

from __future__ import annotations

import csv
import json
import platform
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .action_space import ActionSpace, nearest_valid_switch
from .expert_agents import (
    DayResult,
    OverflowRules,
    Transition,
    parse_regime,
    run_day,
)
from .grid_model import GridTopology
from .imitation import Dataset
from .mlp import TrainedModel
from .scenarios import Scenario, days


# ------------------------------------------------------------------ running

def _model_train_ids(agent) -> set[int]:
    model = getattr(agent, "model", None)
    meta = getattr(model, "meta", None) or {}
    return set(meta.get("train_scenarios", ()))


def _regime_labels(regime: str, seeds) -> list[str]:
    """Expand the base regime tag into per-run labels."""
    if regime == "unplanned":
        return [f"unplanned:{s}" for s in seeds]
    return [regime]


def run_days(
    agent,
    scenarios: list[Scenario],
    regime: str,
    *,
    grid: GridTopology,
    seeds=(0,),
    rules: OverflowRules = OverflowRules(),
    jobs: int = 1,
    fast_skip: bool = True,
) -> tuple[list[DayResult], list[Transition]]:
    """Every day of every scenario under the regime; unplanned regimes run
    once per opponent seed.  Output order is canonical (regime, scenario,
    day) regardless of execution order."""
    labels = _regime_labels(regime, seeds)
    tasks = [
        (label, sc, day)
        for label in labels
        for sc in scenarios
        for day in days(sc)
    ]

    def one(task):
        label, sc, day = task
        return run_day(agent, day, parse_regime(label), grid=grid, rules=rules, fast_skip=fast_skip)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, tasks))
    else:
        outcomes = [one(t) for t in tasks]

    order = sorted(
        range(len(tasks)),
        key=lambda i: (tasks[i][0], tasks[i][1].id, tasks[i][2].day_index),
    )
    results = [outcomes[i][0] for i in order]
    transitions = [tr for i in order for tr in outcomes[i][1]]
    return results, transitions


# ---------------------------------------------------------------- benchmark

@dataclass(frozen=True)
class RegimeReport:
    agent: str
    regime: str
    attempted: int
    completed: int
    completion_pct: float
    seed_pcts: dict            # opponent seed -> completion %, unplanned only
    mean_pct: float            # mean over seeds (== completion_pct otherwise)
    std_pct: float
    action_counts: dict        # set-action index -> times chosen
    consecutive_fraction: float  # actions directly followed by another action


def _consecutive_fraction(transitions) -> float:
    followed = 0
    by_day: dict = {}
    for t in transitions:
        if t.action_index > 0:
            by_day.setdefault((t.regime, t.scenario_id, t.day_index), set()).add(t.timestep)
    total = 0
    for steps in by_day.values():
        total += len(steps)
        followed += sum(1 for s in steps if s + 1 in steps)
    return followed / total if total else 0.0


def benchmark(
    agent,
    scenarios: list[Scenario],
    regime: str,
    *,
    grid: GridTopology,
    seeds=(0,),
    rules: OverflowRules = OverflowRules(),
    jobs: int = 1,
    fast_skip: bool = True,
) -> RegimeReport:
    """Completion statistics for one agent under one regime.

    Scenarios that appear in the training split of the agent's model are
    refused outright: measuring on them would grade the model on its own
    teaching material.
    """
    trained_on = _model_train_ids(agent)
    clash = sorted(trained_on & {sc.id for sc in scenarios})
    if clash:
        raise ValueError(
            f"scenarios {clash} were in the model's training split; "
            "benchmark on held-out scenarios only"
        )

    results, transitions = run_days(
        agent, scenarios, regime,
        grid=grid, seeds=seeds, rules=rules, jobs=jobs, fast_skip=fast_skip,
    )
    attempted = len(results)
    completed = sum(1 for r in results if r.completed)
    pct = 100.0 * completed / attempted if attempted else 0.0

    seed_pcts: dict = {}
    if regime == "unplanned":
        for s in seeds:
            label = f"unplanned:{s}"
            mine = [r for r in results if r.regime == label]
            seed_pcts[int(s)] = (
                100.0 * sum(r.completed for r in mine) / len(mine) if mine else 0.0
            )
    vals = list(seed_pcts.values()) or [pct]

    counts = Counter(t.action_index for t in transitions if t.action_index >= 0)
    return RegimeReport(
        agent=getattr(agent, "name", type(agent).__name__),
        regime=regime,
        attempted=attempted,
        completed=completed,
        completion_pct=pct,
        seed_pcts=seed_pcts,
        mean_pct=float(np.mean(vals)),
        std_pct=float(np.std(vals)),
        action_counts={int(k): int(v) for k, v in sorted(counts.items())},
        consecutive_fraction=_consecutive_fraction(transitions),
    )


# ------------------------------------------------------------------ latency

@dataclass(frozen=True)
class TimingReport:
    agent: str
    mean_us: float
    samples: int
    environment: str


def measure_latency(
    agent,
    scenarios: list[Scenario],
    n_days: int,
    *,
    grid: GridTopology,
    regime: str = "full",
    rules: OverflowRules = OverflowRules(),
) -> TimingReport:
    """Mean wall-clock per deliberated decision, strictly sequential.

    Only the agent's own decision time counts (its simulations included,
    environment stepping excluded).  The first day's samples are discarded
    as warm-up.
    """
    reg = parse_regime(regime)
    samples: list[float] = []
    ran = 0
    for sc in scenarios:
        for day in days(sc):
            if ran >= n_days:
                break
            _, transitions = run_day(agent, day, reg, grid=grid, rules=rules)
            ran += 1
            if ran == 1:
                continue
            samples.extend(t.decision_us for t in transitions)
        if ran >= n_days:
            break
    if not samples:
        raise ValueError("no deliberated decisions in the measured days")
    return TimingReport(
        agent=getattr(agent, "name", type(agent).__name__),
        mean_us=float(np.mean(samples)),
        samples=len(samples),
        environment=f"{platform.platform()} single-threaded",
    )


# ------------------------------------------------- action distributions

def action_distribution(transitions, space: ActionSpace) -> np.ndarray:
    """Frequency vector over the enumerated actions from a transition log."""
    counts = np.zeros(len(space.actions))
    n = 0
    for t in transitions:
        if 0 <= t.action_index < len(counts):
            counts[t.action_index] += 1
            n += 1
    if n == 0:
        raise ValueError("empty transition log")
    return counts / n


def cosine_distance(d1: np.ndarray, d2: np.ndarray) -> float:
    """1 - cosine similarity; NaN marks the undefined zero-vector case."""
    a, b = np.asarray(d1, dtype=float), np.asarray(d2, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return float("nan")
    return float(1.0 - (a @ b) / (na * nb))


def distance_matrix(distributions) -> np.ndarray:
    ds = list(distributions)
    out = np.zeros((len(ds), len(ds)))
    for i in range(len(ds)):
        for j in range(i + 1, len(ds)):
            out[i, j] = out[j, i] = cosine_distance(ds[i], ds[j])
    return out


# ------------------------------------------------------ confusion analysis

@dataclass(frozen=True)
class ConfusionAnalysis:
    pairs: tuple               # ((true index, predicted index, count), ...) desc
    points: np.ndarray         # (n, 2) PCA projection
    classes: np.ndarray        # (n,) expert action index
    confused: np.ndarray       # (n,) bool, prediction != expert
    components: np.ndarray     # (2, n_features) orthonormal rows
    explained: tuple           # top-2 eigenvalues, descending


def _decode_rows(model: TrainedModel, dataset: Dataset, rows, space, grid):
    P = model.predict_raw(dataset.x[rows])
    topo = dataset.x[rows][:, -grid.n_objects:].astype(np.int8)
    pred = np.zeros(len(rows), dtype=int)
    hits = np.zeros(len(rows), dtype=bool)
    for k in range(len(rows)):
        sw = nearest_valid_switch(P[k], space, topo[k], grid)
        pred[k] = sw.action_index
        hits[k] = np.array_equal(sw.bits, dataset.y[rows][k])
    return pred, hits


def confusion_analysis(
    model: TrainedModel,
    dataset: Dataset,
    space: ActionSpace,
    grid: GridTopology,
    which: int | None = None,
) -> ConfusionAnalysis:
    rows = dataset.rows(which) if which is not None else np.arange(len(dataset.x))
    if len(rows) < 2:
        raise ValueError("need at least two samples")
    pred, _ = _decode_rows(model, dataset, rows, space, grid)
    true = dataset.action_index[rows]
    confused = pred != true
    pair_counts = Counter(
        (int(t), int(p)) for t, p in zip(true[confused], pred[confused])
    )
    pairs = tuple(
        (t, p, c)
        for (t, p), c in sorted(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    )

    xn = dataset.norm.apply(dataset.x[rows])
    centered = xn - xn.mean(axis=0)
    cov = (centered.T @ centered) / (len(rows) - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    top = np.argsort(eigvals)[::-1][:2]
    components = eigvecs[:, top].T
    points = centered @ components.T
    return ConfusionAnalysis(
        pairs=pairs,
        points=points,
        classes=true.copy(),
        confused=confused,
        components=components,
        explained=tuple(float(eigvals[i]) for i in top),
    )


def write_confusion_csv(path: str | Path, analysis: ConfusionAnalysis) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pc1", "pc2", "class", "confused"])
        for (p1, p2), cls, bad in zip(
            analysis.points, analysis.classes, analysis.confused
        ):
            w.writerow([f"{p1:.9g}", f"{p2:.9g}", int(cls), int(bad)])


# ------------------------------------------------- nearest-neighbor overlap

@dataclass(frozen=True)
class NnOverlap:
    n: int
    same_class_fraction: float
    same_class_accuracy: float
    diff_class_accuracy: float


def nn_overlap(
    model: TrainedModel,
    dataset: Dataset,
    space: ActionSpace,
    grid: GridTopology,
    which: int | None = None,
    sample_size: int = 2500,
    seed: int = 0,
) -> NnOverlap:
    """Model accuracy conditioned on whether a point's nearest neighbor
    (Euclidean, normalized features, within the sample) shares its class."""
    rows = dataset.rows(which) if which is not None else np.arange(len(dataset.x))
    rng = np.random.default_rng([seed, 0x6E6E])
    if sample_size < len(rows):
        rows = np.sort(rng.choice(rows, size=sample_size, replace=False))
    if len(rows) < 2:
        raise ValueError("need at least two samples")

    xn = dataset.norm.apply(dataset.x[rows])
    sq = np.einsum("ij,ij->i", xn, xn)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (xn @ xn.T)
    np.fill_diagonal(d2, np.inf)
    nn = d2.argmin(axis=1)

    classes = dataset.action_index[rows]
    same = classes[nn] == classes
    _, hits = _decode_rows(model, dataset, rows, space, grid)

    def acc(mask):
        return float(hits[mask].mean()) if mask.any() else float("nan")

    return NnOverlap(
        n=len(rows),
        same_class_fraction=float(same.mean()),
        same_class_accuracy=acc(same),
        diff_class_accuracy=acc(~same),
    )


def pareto_points(per_class: dict) -> list:
    """(class, support, accuracy) sorted by support descending; feeds the
    frequency-rank versus accuracy plot without re-running the model."""
    return sorted(
        ((int(c), int(v["n"]), float(v["accuracy"])) for c, v in per_class.items()),
        key=lambda row: (-row[1], row[0]),
    )


# ---------------------------------------------------------------- rendering

def report_to_json(report) -> str:
    doc = asdict(report)
    for key in ("seed_pcts", "action_counts"):
        if key in doc:
            doc[key] = {str(k): v for k, v in doc[key].items()}
    return json.dumps(doc, indent=2)


def format_reports(reports) -> str:
    """Aligned completion table, one row per (agent, regime)."""
    head = ["agent", "regime", "days", "completed", "pct", "mean", "std", "consec"]
    rows = [head]
    for r in reports:
        rows.append([
            r.agent,
            r.regime,
            str(r.attempted),
            str(r.completed),
            f"{r.completion_pct:.2f}",
            f"{r.mean_pct:.2f}",
            f"{r.std_pct:.2f}",
            f"{100.0 * r.consecutive_fraction:.1f}%",
        ])
    widths = [max(len(row[i]) for row in rows) for i in range(len(head))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
