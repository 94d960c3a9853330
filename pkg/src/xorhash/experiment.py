"""Experiment configs: presets, JSON files and command-line overrides.

Precedence, lowest first: built-in preset, config file, command-line flags.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .config import ConfigError, SimConfig, StageLatencies
from .workload import WorkloadError, WorkloadSpec

PRESETS = {
    "xilinx16": {
        "sim": {"p": 16, "k": 16, "entries": 1024, "slots": 4, "key_bits": 64, "value_bits": 64, "clock_mhz": 370.375},
        "workload": {"total_queries": 100_000, "nsq_fraction": 0.5, "key_space_bits": 64},
    },
    "stratix8": {
        "sim": {"p": 8, "k": 4, "entries": 1024, "slots": 4, "key_bits": 64, "value_bits": 64, "clock_mhz": 276.0},
        "workload": {"total_queries": 100_000, "nsq_fraction": 0.5, "key_space_bits": 64},
    },
}

DEFAULT_THETAS = (336, 672, 1344)


@dataclass
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    trace: str = None
    trials: int = 1000
    thetas: tuple = DEFAULT_THETAS
    sweep: dict = field(default_factory=dict)
    plan: dict = field(default_factory=dict)


_TOP = {"sim", "workload", "trace", "trials", "thetas", "sweep", "plan"}


def _merge(base, over):
    out = dict(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def build(tree):
    """Validate a config tree; errors name the offending field."""
    unknown = set(tree) - _TOP
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown top-level key")
    sim_tree = dict(tree.get("sim", {}))
    try:
        sim = SimConfig.from_dict(sim_tree)
    except ConfigError as exc:
        raise ConfigError(f"sim.{exc.field}", str(exc).split(": ", 1)[-1]) from None
    except TypeError as exc:
        raise ConfigError("sim", str(exc)) from None
    try:
        workload = WorkloadSpec.from_dict(tree.get("workload", {}))
    except (WorkloadError, TypeError) as exc:
        raise ConfigError("workload", str(exc)) from None
    trials = tree.get("trials", 1000)
    if not isinstance(trials, int) or trials < 1:
        raise ConfigError("trials", f"must be a positive integer, got {trials!r}")
    thetas = tuple(tree.get("thetas", DEFAULT_THETAS))
    if not thetas or any(not isinstance(t, (int, float)) or t <= 0 for t in thetas):
        raise ConfigError("thetas", "must be a non-empty list of positive numbers")
    for name in ("sweep", "plan"):
        if not isinstance(tree.get(name, {}), dict):
            raise ConfigError(name, "must be an object")
    return ExperimentConfig(sim, workload, tree.get("trace"), trials, thetas, tree.get("sweep", {}), tree.get("plan", {}))


def load(path=None, preset=None, overrides=None):
    tree = {}
    if preset:
        if preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        tree = _merge(tree, PRESETS[preset])
    if path:
        with open(path) as fh:
            try:
                file_tree = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("config", f"{path}: {exc}") from None
        if not isinstance(file_tree, dict):
            raise ConfigError("config", f"{path}: top level must be an object")
        tree = _merge(tree, file_tree)
    if overrides:
        tree = _merge(tree, overrides)
    return build(tree)


def with_seed(cfg, seed):
    return replace(cfg, sim=cfg.sim.replace(seed=seed), workload=replace(cfg.workload, seed=seed))
