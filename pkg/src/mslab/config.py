"""Run configuration: TOML with nested tables.

Example:

    [grid]
    n = 2
    N = 32

    [scenario]
    name = "constant-field"          # catalog entry, or build one:
    # [scenario.field]
    # kind = "expression"            # free | constant | polynomial | expression
    # a1 = "-(x2 - 0.5) / 2"
    # a2 = "(x1 - 0.5) / 2"
    # [scenario.potential]
    # kind = "expression"            # none | constant | radial | expression
    # text = "x1^2 + x2^2"

    seed = 0
    output = "results"

    [[experiment]]
    kind = "riesz-norms"
    operators = ["riesz_vector"]
    p = [2.0, 3.0, 4.0]
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - environment dependent
    import tomli as tomllib

import numpy as np

from .expr import parse_expr
from .grid import GridSpec
from .scenarios import (
    FieldSpec,
    PotentialSpec,
    Scenario,
    constant_field,
    constant_potential,
    free_field,
    get_scenario,
    no_potential,
    polynomial_field,
    radial_power_potential,
)

EXPERIMENT_KINDS = (
    "build-operator",
    "weights-rh",
    "weights-m",
    "riesz-norms",
    "riesz-reverse",
    "cz-run",
    "gauge-check",
    "fp-check",
    "solutions-check",
)


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    grid: GridSpec
    scenario: Scenario
    scenario_spec: dict
    seed: int = 0
    output: str = "results"
    experiments: list = field(default_factory=list)

    @property
    def out_dir(self) -> Path:
        return Path(self.output)


def _field_from_table(table: dict, n: int) -> FieldSpec:
    kind = table.get("kind", "free")
    if kind == "free":
        return free_field()
    if kind == "constant":
        return constant_field(float(table.get("w0", 1.0)), n=n)
    if kind == "polynomial":
        return polynomial_field(float(table.get("c0", 1.0)), float(table.get("c1", 1.0)), n=n)
    if kind == "expression":
        fns = []
        for j in range(n):
            key = f"a{j + 1}"
            if key not in table:
                raise ConfigError(f"expression field needs component {key!r}")
            fns.append(parse_expr(table[key]))
        return FieldSpec(name=f"expr({', '.join(table[f'a{j+1}'] for j in range(n))})", a_fns=tuple(fns))
    raise ConfigError(f"unknown field kind {kind!r}")


def _potential_from_table(table: dict) -> PotentialSpec:
    kind = table.get("kind", "none")
    if kind == "none":
        return no_potential()
    if kind == "constant":
        return constant_potential(float(table.get("v0", 1.0)))
    if kind == "radial":
        return radial_power_potential(
            float(table.get("gamma", 1.0)),
            center=table.get("center"),
            scale=float(table.get("scale", 1.0)),
        )
    if kind == "expression":
        if "text" not in table:
            raise ConfigError("expression potential needs 'text'")
        expr = parse_expr(table["text"])
        return PotentialSpec(name=f"expr({table['text']})", fn=expr)
    raise ConfigError(f"unknown potential kind {kind!r}")


def _scenario_from_tables(data: dict, n: int):
    sc = data.get("scenario", {})
    if "name" in sc:
        return get_scenario(sc["name"]), {"name": sc["name"]}
    fs = _field_from_table(sc.get("field", {}), n)
    ps = _potential_from_table(sc.get("potential", {}))
    scenario = Scenario(fs, ps, shift=float(sc.get("shift", 0.0)))
    return scenario, {
        "field": dict(sc.get("field", {"kind": "free"})),
        "potential": dict(sc.get("potential", {"kind": "none"})),
    }


def load_config(path, overrides: dict = None) -> Config:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad config file {path}: {exc}") from exc
    return config_from_dict(data, overrides or {})


def config_from_dict(data: dict, overrides: dict = None) -> Config:
    overrides = overrides or {}
    gtab = dict(data.get("grid", {}))
    n = int(overrides.get("grid_n") or gtab.get("n", 2))
    N = int(overrides.get("grid_N") or gtab.get("N", 32))
    L = float(gtab.get("L", 1.0))
    grid = GridSpec(n=n, N=N, L=L)
    scenario, scenario_spec = _scenario_from_tables(data, n)
    seed = int(overrides.get("seed") if overrides.get("seed") is not None else data.get("seed", 0))
    output = str(overrides.get("out") or data.get("output", "results"))
    experiments = []
    for entry in data.get("experiment", []):
        entry = dict(entry)
        kind = entry.get("kind")
        if kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {kind!r}; known: {EXPERIMENT_KINDS}")
        experiments.append(entry)
    return Config(
        grid=grid,
        scenario=scenario,
        scenario_spec=scenario_spec,
        seed=seed,
        output=output,
        experiments=experiments,
    )
