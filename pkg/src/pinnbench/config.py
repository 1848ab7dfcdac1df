"""YAML run configuration and the run manifest.

A config file mirrors the benchmark's type structure; every key has a
default equal to the paper-matrix value, so an empty file reproduces the
reference setup.  Unknown keys are rejected by name -- silent typos in a
hyperparameter file are how benchmarks go wrong.

Example::

    master_seed: 7
    network: {hidden_layers: 9, hidden_width: 128}
    optimizer: adam
    adam: {lr: 0.006, iterations: 6000}

Suite files hold a ``scenarios:`` list of the same mappings (each may set
``name:``; otherwise the canonical ``9L-64N/ADAM/10000/lr0.002`` style name
is derived).
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, fields
from pathlib import Path

import yaml

from ._version import __version__
from .domain import DomainSpec, GridSpec, NoiseSpec
from .experiment import ScenarioConfig
from .loss import LossWeights, SamplingPlan
from .network import NetworkConfig
from .optimizer import AdamConfig, LbfgsConfig
from .rng import derive_seed

__all__ = ["ConfigError", "load_scenario", "load_suite", "write_manifest"]


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending key."""


_SECTIONS = {
    "domain": DomainSpec,
    "grid": GridSpec,
    "noise": NoiseSpec,
    "network": NetworkConfig,
    "weights": LossWeights,
    "plan": SamplingPlan,
    "adam": AdamConfig,
    "lbfgs": LbfgsConfig,
}

_TOP_KEYS = set(_SECTIONS) | {"name", "optimizer", "master_seed", "deterministic"}


def _build_section(cls, mapping: dict, where: str):
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise ConfigError(f"section '{where}' must be a mapping")
    allowed = {f.name for f in fields(cls)}
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown key '{where}.{key}'")
    try:
        return cls(**mapping)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid section '{where}': {err}") from err


def resolve_scenario(raw: dict, overrides: dict | None = None) -> ScenarioConfig:
    """Mapping -> ScenarioConfig, deriving child seeds from master_seed.

    Seeds may be pinned per section; absent ones are fanned out from the
    master seed with fixed labels so streams never collide.
    """
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    raw = dict(raw)
    if overrides:
        for key, value in overrides.items():
            if value is None:
                continue
            if "." in key:
                section, sub = key.split(".", 1)
                raw.setdefault(section, {})
                if raw[section] is None:
                    raw[section] = {}
                raw[section][sub] = value
            else:
                raw[key] = value
    for key in raw:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown key '{key}'")

    master_seed = raw.get("master_seed", 0)
    if not isinstance(master_seed, int):
        raise ConfigError("'master_seed' must be an integer")

    noise_map = dict(raw.get("noise") or {})
    noise_map.setdefault("seed", derive_seed(master_seed, "noise"))
    plan_map = dict(raw.get("plan") or {})
    plan_map.setdefault("seed", derive_seed(master_seed, "sampling"))

    optimizer = raw.get("optimizer", "adam")
    lbfgs = None
    if "lbfgs" in raw and raw["lbfgs"] is not None:
        lbfgs = _build_section(LbfgsConfig, raw["lbfgs"], "lbfgs")
    elif optimizer == "adam+lbfgs":
        lbfgs = LbfgsConfig()

    try:
        return ScenarioConfig(
            domain=_build_section(DomainSpec, raw.get("domain"), "domain"),
            grid=_build_section(GridSpec, raw.get("grid"), "grid"),
            noise=_build_section(NoiseSpec, noise_map, "noise"),
            network=_build_section(NetworkConfig, raw.get("network"), "network"),
            weights=_build_section(LossWeights, raw.get("weights"), "weights"),
            plan=_build_section(SamplingPlan, plan_map, "plan"),
            optimizer=optimizer,
            adam=_build_section(AdamConfig, raw.get("adam"), "adam"),
            lbfgs=lbfgs,
            master_seed=master_seed,
            init_seed=derive_seed(master_seed, "init"),
            name=raw.get("name", ""),
            deterministic=bool(raw.get("deterministic", True)),
        )
    except (TypeError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err)) from err


def _load_yaml(path: Path) -> dict:
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as err:
        raise ConfigError(f"cannot parse {path}: {err}") from err
    return data if data is not None else {}


def load_scenario(path, overrides: dict | None = None) -> ScenarioConfig:
    path = Path(path)
    data = _load_yaml(path)
    if isinstance(data, dict) and "scenarios" in data:
        raise ConfigError(f"{path} is a suite file; pass it to 'bench' instead")
    return resolve_scenario(data, overrides)


def load_suite(path, overrides: dict | None = None) -> list[ScenarioConfig]:
    path = Path(path)
    data = _load_yaml(path)
    if not isinstance(data, dict) or "scenarios" not in data:
        raise ConfigError(f"{path}: suite files need a 'scenarios' list")
    for key in data:
        if key not in ("scenarios", "defaults"):
            raise ConfigError(f"unknown key '{key}'")
    entries = data["scenarios"]
    if not isinstance(entries, list) or not entries:
        raise ConfigError("'scenarios' must be a non-empty list")
    defaults = data.get("defaults") or {}
    configs = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"scenario #{i + 1} must be a mapping")
        merged = _deep_merge(defaults, entry)
        configs.append(resolve_scenario(merged, overrides))
    names = [c.name for c in configs]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ConfigError(f"duplicate scenario names: {dupes}")
    return configs


def _deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def scenario_as_dict(cfg: ScenarioConfig) -> dict:
    out = {
        "name": cfg.name,
        "optimizer": cfg.optimizer,
        "master_seed": cfg.master_seed,
        "init_seed": cfg.init_seed,
        "deterministic": cfg.deterministic,
        "domain": asdict(cfg.domain),
        "grid": asdict(cfg.grid),
        "noise": asdict(cfg.noise),
        "network": asdict(cfg.network),
        "weights": asdict(cfg.weights),
        "plan": asdict(cfg.plan),
        "adam": asdict(cfg.adam),
        "lbfgs": asdict(cfg.lbfgs) if cfg.lbfgs else None,
    }
    return out


def write_manifest(out_dir, config_path, resolved, command: str) -> Path:
    """Run manifest, written before any long computation starts."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(resolved, ScenarioConfig):
        resolved_dict = scenario_as_dict(resolved)
    else:
        resolved_dict = [scenario_as_dict(c) for c in resolved]
    manifest = {
        "command": command,
        "config_path": str(config_path) if config_path else None,
        "resolved": resolved_dict,
        "output_dir": str(out_dir),
        "tool_version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
