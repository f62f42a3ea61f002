"""Experiment configuration: defaults, YAML loading, validation, and
construction of the runtime objects (plant, game, scenario)."""

from __future__ import annotations

import copy
import hashlib
import json

import numpy as np
import yaml

from .errors import ConfigError
from .events import TriggerConfig
from .game import ActionBounds, GainId, Player, UtilityParams, UtilityVariant
from .plant import (
    PlantParams,
    Scenario,
    load_scenario,
    make_benchmark_scenario,
    scenario_from_dict,
)
from .tuner import GameConfig

_GAIN_IDS = {"kp": GainId.P, "ki": GainId.I, "kd": GainId.D}

DEFAULT_CONFIG = {
    "seed": 0,
    "out": "out",
    "plant": {
        "c_t": 1.0e5,
        "c_z": 5.0e5,
        "q_max": 0.55,
        "cp": 4186.0,
        "k_amb": 20.0,
        "t_ambient": 295.15,
        "chiller_gain": 5.0e4,
        "chiller_setpoint": 292.65,
        "valve_tau": 20.0,
        "sensor_delay": 0.0,
    },
    "scenario": "static",
    "scenario_options": {
        "static_cycles": 2,
        "random_duration": 6000.0,
    },
    "game": {
        "players": {
            "kp": {
                "min": 0.0,
                "max": 10.0,
                "barrier_coeff": 0.8,
                "utility": {
                    "alpha_x": 0.3,
                    "alpha_y": 0.3,
                    "gamma": 1.0,
                    "variant": "type2",
                },
            },
            "ki": {
                "min": 0.0,
                "max": 0.17,
                "barrier_coeff": 10.0,
                "utility": {
                    "alpha_x": 0.1,
                    "alpha_y": 0.1,
                    "gamma": 1.0,
                    "variant": "type2",
                },
            },
        },
        "trigger": {"theta_h": 0.5, "theta_l": -0.5, "t_w": 20.0, "sample_dt": 0.1},
        "learner": "gb",
        "learning_rate": 30.0,
        "exploration": {"eps0": 0.5, "decay": 0.9},
        "episodes": 40,
        "map": {
            "resolution": [4, 32],
            "state_ranges": [[0.0, 5.0], [0.0, 8.0]],
            "gamma_map": 1.0e-4,
        },
    },
    "bounds_search": {
        "kp_range": [0.0, 10.0],
        "ki_range": [0.0, 0.17],
        "resolution": [12, 12],
        "dwell": 400.0,
    },
    "baseline": {"count": 10},
    "validation": {
        "setpoints": [295.15, 296.15, 297.15, 298.15, 299.15],
        "random_duration": 6000.0,
        "static_cycles": 2,
    },
}

# Allowed structure: maps key -> nested dict, type tuple, or (list, item type).
_NUM = (int, float)
_SCHEMA = {
    "seed": int,
    "out": str,
    "plant": {k: _NUM for k in DEFAULT_CONFIG["plant"]},
    "scenario": (str, dict),
    "scenario_options": {"static_cycles": int, "random_duration": _NUM},
    "game": {
        "players": {
            key: {
                "min": _NUM,
                "max": _NUM,
                "barrier_coeff": _NUM,
                "utility": {
                    "alpha_x": _NUM,
                    "alpha_y": _NUM,
                    "gamma": _NUM,
                    "variant": str,
                },
            }
            for key in ("kp", "ki", "kd")
        },
        "trigger": {"theta_h": _NUM, "theta_l": _NUM, "t_w": _NUM, "sample_dt": _NUM},
        "learner": str,
        "learning_rate": _NUM,
        "exploration": {"eps0": _NUM, "decay": _NUM},
        "episodes": int,
        "map": {"resolution": list, "state_ranges": list, "gamma_map": _NUM},
    },
    "bounds_search": {
        "kp_range": list,
        "ki_range": list,
        "resolution": list,
        "dwell": _NUM,
    },
    "baseline": {"count": int},
    "validation": {"setpoints": list, "random_duration": _NUM, "static_cycles": int},
}


def _validate(doc, schema, path=""):
    if not isinstance(doc, dict):
        raise ConfigError(f"config section {path or '<root>'} must be a mapping")
    for key, value in doc.items():
        here = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown config key: {here}")
        expected = schema[key]
        if isinstance(expected, dict):
            if key == "scenario" and not isinstance(value, dict):
                raise ConfigError(f"{here} must be a mapping")
            _validate(value, expected, here)
        else:
            if key == "scenario":
                if not isinstance(value, (str, dict)):
                    raise ConfigError(f"{here} must be a string or a mapping")
                continue
            if expected is int and isinstance(value, bool):
                raise ConfigError(f"{here} must be an integer")
            if not isinstance(value, expected):
                raise ConfigError(f"{here} has the wrong type")


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Load a YAML config document, merge over the defaults, validate."""
    doc = {}
    if path is not None:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {path} is not a mapping")
    _validate(doc, _SCHEMA)
    cfg = _merge(DEFAULT_CONFIG, doc)
    if overrides:
        cfg = _merge(cfg, overrides)
    _validate({k: v for k, v in cfg.items() if k != "scenario"}, _SCHEMA)
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def build_plant_params(cfg: dict) -> PlantParams:
    try:
        return PlantParams(**cfg["plant"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid plant parameters: {exc}") from exc


def build_game(
    cfg: dict,
    utility_override: str | None = None,
    learner_override: str | None = None,
    bounds_override: dict | None = None,
) -> GameConfig:
    """Build the game from config; optional overrides come from CLI flags
    or a detected-bounds file."""
    g = cfg["game"]
    players: dict[str, Player] = {}
    utilities: dict[str, UtilityParams] = {}
    for key, spec in g["players"].items():
        lo, hi = float(spec["min"]), float(spec["max"])
        if bounds_override and key in bounds_override:
            lo, hi = (float(v) for v in bounds_override[key])
        variant = utility_override or spec["utility"]["variant"]
        try:
            players[key] = Player(
                id=_GAIN_IDS[key],
                bounds=ActionBounds(lo, hi),
                barrier_coeff=float(spec["barrier_coeff"]),
            )
            utilities[key] = UtilityParams(
                alpha_x=float(spec["utility"]["alpha_x"]),
                alpha_y=float(spec["utility"]["alpha_y"]),
                gamma=float(spec["utility"]["gamma"]),
                variant=UtilityVariant(variant),
            )
        except ValueError as exc:
            raise ConfigError(f"invalid player {key!r}: {exc}") from exc
    try:
        trigger = TriggerConfig(**g["trigger"])
        return GameConfig(
            players=players,
            utilities=utilities,
            trigger=trigger,
            learner=learner_override or g["learner"],
            learning_rate=float(g["learning_rate"]),
            eps0=float(g["exploration"]["eps0"]),
            decay=float(g["exploration"]["decay"]),
            episodes=int(g["episodes"]),
            resolution=tuple(g["map"]["resolution"]),
            state_ranges=tuple(tuple(r) for r in g["map"]["state_ranges"]),
            gamma_map=float(g["map"]["gamma_map"]),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid game config: {exc}") from exc


def build_scenario(
    cfg: dict,
    scenario_seed: int,
    scenario_override: str | None = None,
) -> Scenario:
    """Resolve the scenario reference: builtin kind, file path, or inline."""
    ref = scenario_override if scenario_override is not None else cfg["scenario"]
    opts = cfg["scenario_options"]
    if isinstance(ref, dict):
        return scenario_from_dict(ref)
    if ref == "static":
        return make_benchmark_scenario(
            "static", seed=scenario_seed, n_cycles=int(opts["static_cycles"])
        )
    if ref == "random":
        return make_benchmark_scenario(
            "random", seed=scenario_seed, duration=float(opts["random_duration"])
        )
    return load_scenario(ref)


def seed_int(seed_seq) -> int:
    """Collapse a SeedSequence stream to a plain integer seed."""
    return int(np.random.default_rng(seed_seq).integers(0, 2**31 - 1))
