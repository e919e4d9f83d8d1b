"""Feature extraction and dataset assembly for behavioral cloning.

A logged decision becomes one training sample: the observed grid as a flat
feature vector, and the expert's move as a relative switch encoding against
the topology it was taken in.  Explicit do-nothing decisions and days that
ended in blackout are dropped; implicit do-nothings (an assignment that
changes nothing) are kept as all-zero targets, which teaches the model to
stand pat on states the expert deliberately left alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .action_space import ActionSpace, set_to_switch
from .expert_agents import Transition
from .grid_model import DISABLED, GridTopology
from .scenarios import ScenarioSplit

TRAIN, VAL, TEST = 0, 1, 2

_PER_INJECTION = 3   # active power, reactive power (0 in the DC model), voltage (1.0)
_PER_ENDPOINT = 6    # active flow, reactive (0), voltage (1.0), |flow|, loading, limit


def feature_size(grid: GridTopology) -> int:
    return (
        _PER_INJECTION * (len(grid.generators) + len(grid.loads))
        + 2 * _PER_ENDPOINT * len(grid.lines)
        + grid.n_objects
    )


def extract_features(
    grid: GridTopology,
    topology: np.ndarray,
    gen_p: np.ndarray,
    load_p: np.ndarray,
    line_flow: np.ndarray,
    loading: np.ndarray,
) -> np.ndarray:
    """Flat observation vector; blocks follow the canonical object order,
    then the raw topology vector (left unnormalized downstream)."""
    n_lines = len(grid.lines)
    gen = np.zeros((len(grid.generators), _PER_INJECTION))
    gen[:, 0] = gen_p
    gen[:, 2] = 1.0
    load = np.zeros((len(grid.loads), _PER_INJECTION))
    load[:, 0] = load_p
    load[:, 2] = 1.0

    on = (topology[grid.line_or_index] != DISABLED) & (
        topology[grid.line_ex_index] != DISABLED
    )
    flow = np.where(on, line_flow, 0.0)
    rho = np.where(on, loading, 0.0)
    limit = np.where(on, grid.thermal_limit, 0.0)

    ors = np.zeros((n_lines, _PER_ENDPOINT))
    ors[:, 0] = flow
    ors[:, 2] = np.where(on, 1.0, 0.0)
    ors[:, 3] = np.abs(flow)
    ors[:, 4] = rho
    ors[:, 5] = limit
    exs = ors.copy()
    exs[:, 0] = -flow        # power leaves the line at the extremity end

    return np.concatenate(
        [gen.ravel(), load.ravel(), ors.ravel(), exs.ravel(), topology.astype(np.float64)]
    )


def topology_slice(grid: GridTopology) -> slice:
    """Where the raw topology block sits inside a feature vector."""
    return slice(feature_size(grid) - grid.n_objects, feature_size(grid))


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


def fit_norm_stats(x_train: np.ndarray, grid: GridTopology) -> NormStats:
    """Z-score statistics from the training rows only.  Constant features get
    unit scale, and the topology block passes through untouched."""
    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    std[std < 1e-12] = 1.0      # constant features pass through centered
    ts = topology_slice(grid)
    mean[ts] = 0.0
    std[ts] = 1.0
    return NormStats(mean=mean, std=std)


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray               # (N, feature_size) raw, unnormalized
    y: np.ndarray               # (N, n_objects) switch-bit targets
    action_index: np.ndarray    # (N,) set-action identity of the expert move
    scenario_id: np.ndarray
    day_index: np.ndarray
    timestep: np.ndarray
    network: tuple[str, ...]    # regime label per sample
    split: np.ndarray           # (N,) TRAIN / VAL / TEST
    norm: NormStats

    def __len__(self) -> int:
        return len(self.x)

    def rows(self, which: int) -> np.ndarray:
        return np.flatnonzero(self.split == which)


def build_dataset(
    transitions: Iterable[Transition],
    grid: GridTopology,
    space: ActionSpace,
    split: ScenarioSplit,
) -> Dataset:
    membership = {}
    for tag, ids in ((TRAIN, split.train), (VAL, split.validation), (TEST, split.test)):
        for sid in ids:
            membership[sid] = tag

    xs, ys, acts, sids, dids, steps, nets, tags = [], [], [], [], [], [], [], []
    for tr in transitions:
        if not tr.day_completed or tr.action_index == 0:
            continue
        if tr.scenario_id not in membership:
            raise ValueError(f"scenario {tr.scenario_id} is not in the provided split")
        topo = np.asarray(tr.topology)
        xs.append(
            extract_features(
                grid, topo,
                np.asarray(tr.gen_p), np.asarray(tr.load_p),
                np.asarray(tr.line_flow), np.asarray(tr.loading),
            )
        )
        ys.append(set_to_switch(space.actions[tr.action_index], topo, grid).bits)
        acts.append(tr.action_index)
        sids.append(tr.scenario_id)
        dids.append(tr.day_index)
        steps.append(tr.timestep)
        nets.append(tr.regime)
        tags.append(membership[tr.scenario_id])

    if not xs:
        raise ValueError("no usable samples: every transition was filtered out")

    x = np.array(xs)
    split_arr = np.array(tags)
    norm = fit_norm_stats(x[split_arr == TRAIN], grid) if (split_arr == TRAIN).any() else fit_norm_stats(x, grid)
    return Dataset(
        x=x,
        y=np.array(ys, dtype=np.int8),
        action_index=np.array(acts),
        scenario_id=np.array(sids),
        day_index=np.array(dids),
        timestep=np.array(steps),
        network=tuple(nets),
        split=split_arr,
        norm=norm,
    )


# -------------------------------------------------------------- persistence

def write_dataset(directory: str | Path, dataset: Dataset) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "dataset.jsonl", "w") as fh:
        for k in range(len(dataset)):
            rec = {
                "x": [round(float(v), 9) for v in dataset.x[k]],
                "y": np.flatnonzero(dataset.y[k]).tolist(),
                "action": int(dataset.action_index[k]),
                "scenario": int(dataset.scenario_id[k]),
                "day": int(dataset.day_index[k]),
                "step": int(dataset.timestep[k]),
                "network": dataset.network[k],
                "split": int(dataset.split[k]),
            }
            fh.write(json.dumps(rec) + "\n")
    meta = {
        "format_version": 1,
        "n_samples": len(dataset),
        "n_features": int(dataset.x.shape[1]),
        "n_targets": int(dataset.y.shape[1]),
        "counts": {
            "train": int((dataset.split == TRAIN).sum()),
            "val": int((dataset.split == VAL).sum()),
            "test": int((dataset.split == TEST).sum()),
        },
        "norm": {
            "mean": dataset.norm.mean.tolist(),
            "std": dataset.norm.std.tolist(),
        },
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=1))


def read_dataset(directory: str | Path) -> Dataset:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    n_targets = meta["n_targets"]
    xs, ys, acts, sids, dids, steps, nets, tags = [], [], [], [], [], [], [], []
    with open(directory / "dataset.jsonl") as fh:
        for line in fh:
            rec = json.loads(line)
            xs.append(rec["x"])
            bits = np.zeros(n_targets, dtype=np.int8)
            bits[rec["y"]] = 1
            ys.append(bits)
            acts.append(rec["action"])
            sids.append(rec["scenario"])
            dids.append(rec["day"])
            steps.append(rec["step"])
            nets.append(rec["network"])
            tags.append(rec["split"])
    return Dataset(
        x=np.array(xs),
        y=np.array(ys, dtype=np.int8),
        action_index=np.array(acts),
        scenario_id=np.array(sids),
        day_index=np.array(dids),
        timestep=np.array(steps),
        network=tuple(nets),
        split=np.array(tags),
        norm=NormStats(
            mean=np.array(meta["norm"]["mean"]), std=np.array(meta["norm"]["std"])
        ),
    )
