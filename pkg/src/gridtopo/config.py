"""Run configuration: a TOML file mapped onto the package's config dataclasses.

The file is organized in sections, one per concern:

    [paths]       grid = "custom_grid.json"   scenarios = "out/scenarios"
    [thresholds]  eta = 0.97                  theta = 1.0
    [overflow]    soft_threshold = 1.0  soft_steps = 3  hard_threshold = 2.0
    [n1]          disable_set = [0, 1, 2, 3, 4, 5, 6, 12]
    [gen]         any field of GenConfig, e.g. n_scenarios = 24
    [train]       any field of TrainConfig, e.g. seed = 1
    [seeds]       default = 0                 benchmark = [0, 1, 2]

Every section is optional and every key has the dataclass default.  Unknown
sections and keys are rejected by full dotted path rather than silently
ignored, since a typo like `train.learning_rte` would otherwise train with
the default and waste the run.  Command-line flags always win over file
values; the file wins over built-in defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import tomli

from .expert_agents import N1Config
from .mlp import TrainConfig
from .power_flow import OverflowRules
from .scenarios import GenConfig


class ConfigError(ValueError):
    """A malformed run configuration file, with the offending key path."""


@dataclass(frozen=True)
class SeedConfig:
    default: int = 0
    benchmark: tuple = (0,)


@dataclass(frozen=True)
class RunConfig:
    grid: str | None = None           # None = bundled reference grid
    scenarios: str | None = None
    eta: float = 0.97
    theta: float = 1.0
    overflow: OverflowRules = field(default_factory=OverflowRules)
    n1: N1Config = field(default_factory=N1Config)
    gen: GenConfig = field(default_factory=GenConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)


_SECTIONS = {
    "paths": None,                    # handled by hand: plain strings
    "thresholds": None,
    "overflow": OverflowRules,
    "n1": N1Config,
    "gen": GenConfig,
    "train": TrainConfig,
    "seeds": SeedConfig,
}


def _coerce(path: str, value, kind: str):
    """Check a TOML value against a dataclass field's annotated type."""
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if kind.startswith("tuple"):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        numeric = all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        )
        if "float" in kind:
            if not numeric:
                raise ConfigError(f"{path}: expected a list of numbers, got {value!r}")
            return tuple(float(v) for v in value)
        if not numeric or not all(isinstance(v, int) for v in value):
            raise ConfigError(f"{path}: expected a list of integers, got {value!r}")
        return tuple(int(v) for v in value)
    raise ConfigError(f"{path}: unsupported field type {kind!r}")


def _load_section(name: str, raw: dict, cls):
    allowed = {f.name: f.type for f in fields(cls)}
    out = {}
    for key, value in raw.items():
        if key not in allowed:
            known = ", ".join(sorted(allowed))
            raise ConfigError(f"unknown key {name}.{key} (known keys: {known})")
        out[key] = _coerce(f"{name}.{key}", value, allowed[key])
    return replace(cls(), **out)


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    try:
        raw = tomli.loads(Path(path).read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: not valid TOML: {exc}") from exc

    cfg = RunConfig()
    for section, body in raw.items():
        if section not in _SECTIONS:
            known = ", ".join(sorted(_SECTIONS))
            raise ConfigError(f"unknown section [{section}] (known sections: {known})")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table, got {body!r}")
        if section == "paths":
            for key, value in body.items():
                if key not in ("grid", "scenarios"):
                    raise ConfigError(f"unknown key paths.{key} (known keys: grid, scenarios)")
                cfg = replace(cfg, **{key: _coerce(f"paths.{key}", value, "str")})
        elif section == "thresholds":
            for key, value in body.items():
                if key not in ("eta", "theta"):
                    raise ConfigError(f"unknown key thresholds.{key} (known keys: eta, theta)")
                cfg = replace(cfg, **{key: _coerce(f"thresholds.{key}", value, "float")})
        else:
            target = {"overflow": "overflow", "n1": "n1", "gen": "gen",
                      "train": "train", "seeds": "seeds"}[section]
            cfg = replace(cfg, **{target: _load_section(section, body, _SECTIONS[section])})
    return cfg


def describe_schema() -> str:
    """Human-readable schema listing for --help and the README."""
    lines = []
    lines.append("[paths]        grid (str), scenarios (str)")
    lines.append("[thresholds]   eta (float), theta (float)")
    for section in ("overflow", "n1", "gen", "train", "seeds"):
        cls = _SECTIONS[section]
        parts = []
        for f in fields(cls):
            default = getattr(cls(), f.name)
            if dataclasses.is_dataclass(default):
                continue
            parts.append(f"{f.name}={default!r}")
        lines.append(f"[{section}]  " + ", ".join(parts))
    return "\n".join(lines)
