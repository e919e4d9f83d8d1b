"""Synthetic intra-day injection scenarios.

Each scenario is 28 days of 5-minute steps (8064 rows) for 5 generators and
11 loads.  Loads follow a double-peak diurnal curve with per-scenario and
per-day lognormal scaling plus a small autocorrelated wobble; solar follows
a daylight bell with per-day weather, wind is AR(1) noise, nuclear holds a
near-constant level, and the thermal units absorb the residual so that
generation matches demand at every step.

Everything is deterministic: the random stream for scenario k under master
seed s is seeded with the pair [s, k], so scenarios can be produced
independently and in any order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .grid_model import GridTopology

_FORMAT_VERSION = 1
_STEP_MINUTES = 5.0


@dataclass(frozen=True)
class GenConfig:
    """Knobs for the scenario generator. Defaults are the calibrated set."""

    n_scenarios: int = 100
    n_days: int = 28
    steps_per_day: int = 288

    load_base: tuple[float, ...] = (7.2, 9.8, 14.5, 6.1, 5.0, 8.4, 10.3, 6.8, 5.6, 7.9, 4.4)
    load_night_level: float = 0.68
    load_morning_peak_hour: float = 9.0
    load_evening_peak_hour: float = 19.5
    load_peak_width_hours: float = 2.6
    load_morning_gain: float = 0.55
    load_evening_gain: float = 0.75
    load_phase_jitter_hours: float = 0.7
    load_noise_sigma: float = 0.018
    load_noise_phi: float = 0.9
    scenario_scale_sigma: float = 0.05
    day_scale_sigma: float = 0.11

    nuclear_level: float = 28.0
    nuclear_noise_sigma: float = 0.1
    wind_mean: float = 9.0
    wind_sigma: float = 2.2
    wind_phi: float = 0.985
    wind_capacity: float = 20.0
    solar_capacity: float = 16.0
    solar_weather_sigma: float = 0.18
    sunrise_hour: float = 6.0
    sunset_hour: float = 18.0

    thermal_floor: float = 2.0
    thermal_split: tuple[float, ...] = (0.58, 0.42)

    def __post_init__(self):
        if self.n_scenarios <= 0 or self.n_days <= 0:
            raise ValueError("scenario and day counts must be positive")
        if abs(self.steps_per_day * _STEP_MINUTES - 24 * 60) > 1e-9:
            raise ValueError("steps_per_day must tile a day in 5-minute steps")
        if len(self.load_base) != 11:
            raise ValueError("load_base must give 11 levels")
        if any(b <= 0 for b in self.load_base):
            raise ValueError("load_base levels must be positive")
        if abs(sum(self.thermal_split) - 1.0) > 1e-9:
            raise ValueError("thermal_split must sum to 1")

    @property
    def n_steps(self) -> int:
        return self.n_days * self.steps_per_day


@dataclass(frozen=True)
class Scenario:
    id: int
    gen_p: np.ndarray       # (n_steps, 5) MW
    load_p: np.ndarray      # (n_steps, 11) MW

    def __post_init__(self):
        for name in ("gen_p", "load_p"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.gen_p.shape[0] != self.load_p.shape[0]:
            raise ValueError("gen_p and load_p disagree on step count")
        if self.gen_p.shape[0] % 288 != 0:
            raise ValueError("scenario length must be whole days")

    @property
    def n_steps(self) -> int:
        return self.gen_p.shape[0]


@dataclass(frozen=True)
class Day:
    scenario_id: int
    day_index: int
    start_step: int
    gen_p: np.ndarray       # (288, 5)
    load_p: np.ndarray      # (288, 11)


@dataclass(frozen=True)
class ScenarioSplit:
    train: tuple[int, ...]
    validation: tuple[int, ...]
    test: tuple[int, ...]


def _diurnal_profile(hours: np.ndarray, cfg: GenConfig) -> np.ndarray:
    def bump(center, gain):
        return gain * np.exp(-0.5 * ((hours - center) / cfg.load_peak_width_hours) ** 2)

    return (
        cfg.load_night_level
        + bump(cfg.load_morning_peak_hour, cfg.load_morning_gain)
        + bump(cfg.load_evening_peak_hour, cfg.load_evening_gain)
    )


def _ar1(rng: np.random.Generator, n: int, phi: float, sigma: float) -> np.ndarray:
    eps = rng.normal(0.0, sigma, size=n)
    out = np.empty(n)
    out[0] = eps[0] / max(np.sqrt(1 - phi * phi), 1e-6)
    for t in range(1, n):
        out[t] = phi * out[t - 1] + eps[t]
    return out


def generate_scenario(
    grid: GridTopology, config: GenConfig, seed: int, scenario_id: int
) -> Scenario:
    """One deterministic scenario; the stream depends only on (seed, id)."""
    rng = np.random.default_rng([seed, scenario_id])
    T = config.n_steps
    hours = (np.arange(T) % config.steps_per_day) * _STEP_MINUTES / 60.0
    day_of = np.arange(T) // config.steps_per_day

    # loads: shared scenario scale, per-day scale, per-load phase and wobble
    scenario_scale = float(np.exp(rng.normal(0.0, config.scenario_scale_sigma)))
    day_scale = np.exp(rng.normal(0.0, config.day_scale_sigma, size=config.n_days))
    phase = rng.uniform(-config.load_phase_jitter_hours, config.load_phase_jitter_hours, size=11)
    load_p = np.empty((T, 11))
    for i, base in enumerate(config.load_base):
        profile = _diurnal_profile(hours + phase[i], config)
        wobble = 1.0 + _ar1(rng, T, config.load_noise_phi, config.load_noise_sigma)
        load_p[:, i] = base * scenario_scale * day_scale[day_of] * profile * np.clip(wobble, 0.5, 1.5)

    total_load = load_p.sum(axis=1)

    # renewables and baseload by generator kind
    gen_p = np.zeros((T, 5))
    kinds = {g.id: g.kind for g in grid.generators}
    thermal_ids = [gid for gid, k in kinds.items() if k == "thermal"]
    if len(thermal_ids) != len(config.thermal_split):
        raise ValueError("thermal_split length must match the thermal generator count")

    daylight = np.clip(
        np.sin(np.pi * (hours - config.sunrise_hour) / (config.sunset_hour - config.sunrise_hour)),
        0.0,
        None,
    )
    daylight[(hours < config.sunrise_hour) | (hours > config.sunset_hour)] = 0.0
    weather = np.clip(np.exp(rng.normal(-0.05, config.solar_weather_sigma, size=config.n_days)), 0.0, 1.15)

    for gid, kind in kinds.items():
        if kind == "nuclear":
            gen_p[:, gid] = config.nuclear_level + _ar1(rng, T, 0.995, config.nuclear_noise_sigma)
        elif kind == "wind":
            series = config.wind_mean + _ar1(rng, T, config.wind_phi, config.wind_sigma)
            gen_p[:, gid] = np.clip(series, 0.0, config.wind_capacity)
        elif kind == "solar":
            gen_p[:, gid] = config.solar_capacity * daylight * weather[day_of]

    # thermal units balance the residual exactly; if renewables would exceed
    # demand, scale them back uniformly to keep the floor
    non_thermal = gen_p.sum(axis=1)
    residual = total_load - non_thermal
    floor_total = config.thermal_floor * len(thermal_ids)
    tight = residual < floor_total
    if np.any(tight):
        scale = (total_load[tight] - floor_total) / np.maximum(non_thermal[tight], 1e-12)
        gen_p[tight] *= np.clip(scale, 0.0, 1.0)[:, None]
        residual = total_load - gen_p.sum(axis=1)
    for gid, share in zip(thermal_ids, config.thermal_split):
        gen_p[:, gid] = share * residual

    return Scenario(id=scenario_id, gen_p=gen_p, load_p=load_p)


def generate_scenarios(grid: GridTopology, config: GenConfig, seed: int) -> list[Scenario]:
    return [generate_scenario(grid, config, seed, k) for k in range(config.n_scenarios)]


def split_scenarios(
    ids, ratios: tuple[float, float, float] = (0.7, 0.1, 0.2), seed: int = 0
) -> ScenarioSplit:
    """Shuffle ids by seed and partition; validation/test sizes round down,
    the remainder goes to train."""
    ids = list(ids)
    if not ids:
        raise ValueError("cannot split an empty scenario list")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    rng = np.random.default_rng([seed, 0x5917])
    order = [ids[k] for k in rng.permutation(len(ids))]
    n = len(ids)
    n_val = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_val - n_test
    return ScenarioSplit(
        train=tuple(sorted(order[:n_train])),
        validation=tuple(sorted(order[n_train:n_train + n_val])),
        test=tuple(sorted(order[n_train + n_val:])),
    )


def days(scenario: Scenario) -> Iterator[Day]:
    """Slice a scenario into its 288-step days, in order."""
    per = 288
    for d in range(scenario.n_steps // per):
        lo = d * per
        yield Day(
            scenario_id=scenario.id,
            day_index=d,
            start_step=lo,
            gen_p=scenario.gen_p[lo:lo + per],
            load_p=scenario.load_p[lo:lo + per],
        )


# ------------------------------------------------------------- persistence

def config_hash(config: GenConfig) -> str:
    blob = json.dumps(asdict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _scenario_filename(scenario_id: int) -> str:
    return f"scenario_{scenario_id:04d}.csv"


def write_scenario_csv(path: Path, scenario: Scenario) -> None:
    T = scenario.n_steps
    header = "t," + ",".join(f"gen_{k}" for k in range(5)) + "," + ",".join(
        f"load_{k}" for k in range(11)
    )
    body = np.concatenate(
        [np.arange(T)[:, None], scenario.gen_p, scenario.load_p], axis=1
    )
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in body:
            fh.write(
                str(int(row[0])) + "," + ",".join(f"{v:.5f}" for v in row[1:]) + "\n"
            )


def load_scenario_csv(path: Path, scenario_id: int) -> Scenario:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return Scenario(id=scenario_id, gen_p=data[:, 1:6], load_p=data[:, 6:17])


def write_scenario_set(
    out_dir: Path,
    scenarios: list[Scenario],
    split: ScenarioSplit,
    config: GenConfig,
    seed: int,
) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for sc in scenarios:
        name = _scenario_filename(sc.id)
        write_scenario_csv(out_dir / name, sc)
        entries.append({"id": sc.id, "file": name})
    manifest = {
        "format_version": _FORMAT_VERSION,
        "seed": seed,
        "config": asdict(config),
        "config_hash": config_hash(config),
        "scenarios": entries,
        "split": {
            "train": list(split.train),
            "validation": list(split.validation),
            "test": list(split.test),
        },
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_scenario_set(in_dir: Path) -> tuple[list[Scenario], ScenarioSplit, dict]:
    in_dir = Path(in_dir)
    manifest = json.loads((in_dir / "manifest.json").read_text())
    scenarios = [
        load_scenario_csv(in_dir / entry["file"], scenario_id=entry["id"])
        for entry in manifest["scenarios"]
    ]
    split = ScenarioSplit(
        train=tuple(manifest["split"]["train"]),
        validation=tuple(manifest["split"]["validation"]),
        test=tuple(manifest["split"]["test"]),
    )
    return scenarios, split, manifest
