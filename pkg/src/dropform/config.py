"""Scenario configuration from key=value files and command-line overrides.

A config file holds one `key = value` pair per line; `#` starts a comment.
Keys are Params fields, Scenario grid/cadence fields, `preset` (a named
starting scenario) or `solver.<field>` for the linear-solver settings.
"""
from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import replace
from pathlib import Path

from .domain import ConfigurationError, Params
from .harness import BASELINE, Scenario, preset
from .linsolve import SolverConfig

_SCENARIO_KEYS = ("name", "n_z", "n_r", "length_L", "radius_a", "output_every",
                  "metrics_every", "stop_at_pinch")


def _field_types(cls) -> dict[str, object]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


_PARAM_TYPES = _field_types(Params)
_SCENARIO_TYPES = _field_types(Scenario)
_SOLVER_TYPES = _field_types(SolverConfig)


def _convert(key: str, text: str, kind) -> object:
    text = text.strip()
    optional = (typing.get_origin(kind) in (typing.Union, types.UnionType)
                and type(None) in typing.get_args(kind))
    if optional:
        if text.lower() in ("none", ""):
            return None
        kind = next(t for t in typing.get_args(kind) if t is not type(None))
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigurationError(f"cannot read {key}={text!r} as {getattr(kind, '__name__', kind)}") from None


def parse_pairs(lines, source: str = "<overrides>") -> list[tuple[str, str]]:
    pairs = []
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{num}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def read_config(path: str | Path) -> list[tuple[str, str]]:
    p = Path(path)
    return parse_pairs(p.read_text().splitlines(), str(p))


def apply_pairs(pairs, base: Scenario = BASELINE) -> Scenario:
    """Apply key=value pairs in order; a `preset` key resets the starting scenario."""
    scenario = base
    params: dict[str, object] = {}
    own: dict[str, object] = {}
    solver: dict[str, object] = {}
    for key, value in pairs:
        if key == "preset":
            scenario, params, own, solver = preset(value), {}, {}, {}
        elif key.startswith("solver."):
            name = key[len("solver."):]
            if name not in _SOLVER_TYPES:
                raise ConfigurationError(f"unknown solver setting {name!r}")
            solver[name] = _convert(key, value, _SOLVER_TYPES[name])
        elif key in _SCENARIO_KEYS:
            own[key] = _convert(key, value, _SCENARIO_TYPES[key])
        elif key in _PARAM_TYPES and key not in ("sigma_coef", "penalty_chi"):
            params[key] = _convert(key, value, _PARAM_TYPES[key])
        else:
            raise ConfigurationError(f"unknown configuration key {key!r}")
    if solver:
        try:
            own["solver"] = replace(scenario.solver, **solver)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
    scenario = replace(scenario, **own)
    return scenario.with_params(**params) if params else scenario


def load_scenario(config: str | Path | None = None, overrides=(), base: Scenario = BASELINE) -> Scenario:
    pairs = read_config(config) if config is not None else []
    pairs += parse_pairs(overrides, "--set")
    return apply_pairs(pairs, base)
