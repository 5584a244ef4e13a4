"""YAML study configuration: parsing, validation and round-trip emission.

Schema (every key optional; an empty file is the full default study)::

    replications: 1000
    master_seed: 20240611
    effect_scales: [1.0]
    reference_weighting: dem_clin
    max_weight: null            # optional weight cap, off by default
    builtins: true              # start from the built-in populations/scenarios/models
    populations:                # override built-ins field-wise, or add new ones
      trial: {n_simulated: 2000}
      clinic: {role: target, n_simulated: 10000, age_mean: 58, age_sd: 11,
               female: 0.5, race_black: 0.2, race_other: 0.1, hispanic: 0.1,
               hypertension: 0.6, heart_failure: null, cad: 0.2, pad: 0.1}
    scenarios:
      custom: {modifiers: [age, hypertension], delta: 2.0}
    weightings:
      demo_age: [age, female]
    select_populations: [...]   # keep only these (analytic + reference must remain)
    select_scenarios: [...]
    excluded_pairs: [[dem_only, us_census]]

``null`` marks an UNMEASURED clinical covariate. New populations must list
every prevalence explicitly.
"""

from __future__ import annotations

from dataclasses import fields, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError, IpswSimError, SpecificationError
from .montecarlo import StudyConfig, default_config
from .outcomes import ScenarioSpec, scenario_catalog
from .population import BINARY_COLUMNS, PopulationSpec, builtin_specs
from .selection import WeightingSpec, weighting_catalog

TOP_KEYS = {
    "replications", "master_seed", "effect_scales", "reference_weighting", "max_weight",
    "builtins", "populations", "scenarios", "weightings", "select_populations",
    "select_scenarios", "excluded_pairs",
}
POPULATION_KEYS = {f.name for f in fields(PopulationSpec)} - {"name"}
SCENARIO_KEYS = {"modifiers", "mu0", "treatment_shift", "beta", "delta", "sigma_eps"}


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected a mapping, got {type(value).__name__}")
    return value


def _names(value, path: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(path, "expected a list of names")
    return value


def _check_keys(data: dict, allowed: set, path: str) -> None:
    unknown = sorted(set(data) - allowed, key=str)
    if unknown:
        where = f"{path}.{unknown[0]}" if path else str(unknown[0])
        raise ConfigError(where, "unknown key")


def _population(name: str, raw, base: PopulationSpec | None, path: str) -> PopulationSpec:
    raw = _mapping(raw, path)
    _check_keys(raw, POPULATION_KEYS, path)
    if base is None:
        missing = sorted((POPULATION_KEYS - {"role"}) - set(raw))
        if missing:
            raise ConfigError(f"{path}.{missing[0]}", "required for a new population (use null for UNMEASURED)")
    values: dict[str, Any] = {}
    for key, v in raw.items():
        sub = f"{path}.{key}"
        if key == "role":
            if not isinstance(v, str):
                raise ConfigError(sub, "expected a string")
            values[key] = v
        elif key == "n_simulated":
            values[key] = _integer(v, sub)
        elif key in BINARY_COLUMNS and v is None:
            values[key] = None
        else:
            values[key] = _number(v, sub)
    try:
        if base is None:
            return PopulationSpec(name=name, **values)
        return replace(base, **values)
    except SpecificationError as e:
        raise ConfigError(f"{path}.{e.field}", e.reason) from None


def _scenario(name: str, raw, base: ScenarioSpec | None, path: str) -> ScenarioSpec:
    raw = _mapping(raw, path)
    _check_keys(raw, SCENARIO_KEYS, path)
    values: dict[str, Any] = {}
    for key, v in raw.items():
        sub = f"{path}.{key}"
        values[key] = frozenset(_names(v, sub)) if key == "modifiers" else _number(v, sub)
    try:
        if base is None:
            return ScenarioSpec(name=name, **values)
        return replace(base, **values)
    except SpecificationError as e:
        raise ConfigError(f"{path}.{e.field}", e.reason) from None


def config_from_dict(data: dict | None) -> StudyConfig:
    data = {} if data is None else _mapping(data, "")
    _check_keys(data, TOP_KEYS, "")
    builtins = data.get("builtins", True)
    if not isinstance(builtins, bool):
        raise ConfigError("builtins", "expected true or false")

    pops = dict(builtin_specs()) if builtins else {}
    for name, raw in _mapping(data.get("populations", {}), "populations").items():
        pops[name] = _population(name, raw, pops.get(name), f"populations.{name}")
    scens = dict(scenario_catalog()) if builtins else {}
    for name, raw in _mapping(data.get("scenarios", {}), "scenarios").items():
        scens[name] = _scenario(name, raw, scens.get(name), f"scenarios.{name}")
    weights = dict(weighting_catalog()) if builtins else {}
    for name, raw in _mapping(data.get("weightings", {}), "weightings").items():
        try:
            weights[name] = WeightingSpec(name, _names(raw, f"weightings.{name}"))
        except SpecificationError as e:
            raise ConfigError(f"weightings.{name}", e.reason) from None

    for key, table in (("select_populations", pops), ("select_scenarios", scens)):
        if key in data:
            chosen = _names(data[key], key)
            for n in chosen:
                if n not in table:
                    raise ConfigError(key, f"unknown name {n!r}")
            table = {n: table[n] for n in table if n in chosen}
            if key == "select_populations":
                pops = table
            else:
                scens = table

    kwargs: dict[str, Any] = {}
    if "replications" in data:
        kwargs["replications"] = _integer(data["replications"], "replications")
    if "master_seed" in data:
        kwargs["master_seed"] = _integer(data["master_seed"], "master_seed")
    if "effect_scales" in data:
        scales = data["effect_scales"]
        if not isinstance(scales, list) or not scales:
            raise ConfigError("effect_scales", "expected a non-empty list of numbers")
        kwargs["effect_scales"] = tuple(_number(k, f"effect_scales[{i}]") for i, k in enumerate(scales))
        for i, k in enumerate(kwargs["effect_scales"]):
            if not k > 0:
                raise ConfigError(f"effect_scales[{i}]", f"must be positive, got {k}")
    if "reference_weighting" in data:
        if not isinstance(data["reference_weighting"], str):
            raise ConfigError("reference_weighting", "expected a string")
        kwargs["reference_weighting"] = data["reference_weighting"]
    if data.get("max_weight") is not None:
        kwargs["max_weight"] = _number(data["max_weight"], "max_weight")
    if "excluded_pairs" in data:
        pairs = data["excluded_pairs"]
        if not isinstance(pairs, list):
            raise ConfigError("excluded_pairs", "expected a list of [weighting, target] pairs")
        out = []
        for i, p in enumerate(pairs):
            if not (isinstance(p, list) and len(p) == 2 and all(isinstance(x, str) for x in p)):
                raise ConfigError(f"excluded_pairs[{i}]", "expected [weighting, target]")
            out.append(tuple(p))
        kwargs["excluded_pairs"] = tuple(out)

    return StudyConfig(
        populations=tuple(pops.values()),
        scenarios=tuple(scens.values()),
        weightings=tuple(weights.values()),
        **kwargs,
    )


def parse_config(path: str | Path | None) -> StudyConfig:
    """Load and validate a YAML config; ``None`` gives the default study."""
    if path is None:
        return default_config()
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError("", f"not valid YAML: {e}") from None
    try:
        return config_from_dict(data)
    except ConfigError:
        raise
    except IpswSimError as e:
        raise ConfigError("", str(e)) from None


def config_to_dict(config: StudyConfig) -> dict:
    """Fully resolved, self-contained form (``builtins: false``)."""
    pops = {}
    for p in config.populations:
        d = p.to_dict()
        d.pop("name")
        pops[p.name] = d
    return {
        "replications": int(config.replications),
        "master_seed": int(config.master_seed),
        "effect_scales": [float(k) for k in config.effect_scales],
        "reference_weighting": config.reference_weighting,
        "max_weight": config.max_weight,
        "builtins": False,
        "populations": pops,
        "scenarios": {s.name: s.to_dict() for s in config.scenarios},
        "weightings": {w.name: list(w.covariates) for w in config.weightings},
        "excluded_pairs": [list(p) for p in config.excluded_pairs],
    }


def dump_config(config: StudyConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=False)
