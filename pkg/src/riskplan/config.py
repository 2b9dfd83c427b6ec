"""Run configuration: defaults, file loading, dotted-path overrides, seeding."""

from __future__ import annotations

import copy
import json
import zlib
from pathlib import Path

import numpy as np

from .planner import PlannerConfig
from .risk import ClassHarmParams, HarmModel


class ConfigError(Exception):
    pass


DEFAULT_CONFIG: dict = {
    "seed": 0,
    "out_dir": "out",
    "suite": [],
    "jobs": 1,
    "figures": True,
    "trajectory_figures": False,
    "log_candidates": False,
    "predictor": {
        "type": "constant-velocity",
        "h_p": 8,
        "h_f": 12,
        "sigma0": 0.35,
        "sigma_growth": 0.15,
        "params_file": None,
    },
    "planner": {
        "lateral_offsets": [-3.0, -1.5, 0.0, 1.5, 3.0],
        "speed_factors": [0.8, 1.0, 1.2],
        "terminal_speeds": None,
        "horizons": [2.0, 3.0],
        "w_jerk": 0.004,
        "w_time": 0.1,
        "w_lat": 0.002,
        "w_vel": 0.02,
        "a_max": 4.0,
        "v_max": 15.0,
        "kappa_max": 0.5,
        "omega_o": 1.0,
        "omega_u": 1.0,
        "j_mean_mode": "paper-literal",
        "utility_rule": "equation",
        "risk_aggregation": "max",
        "v_target": None,
    },
    "harm": {
        "classes": {
            "car": {"beta0": -5.0, "beta1": 0.25, "kappa": 1.0},
            "truck": {"beta0": -5.0, "beta1": 0.25, "kappa": 1.0},
            "pedestrian": {"beta0": -3.5, "beta1": 0.35, "kappa": 1.0},
            "cyclist": {"beta0": -3.5, "beta1": 0.35, "kappa": 1.0},
        },
        "truck_ego_multiplier": 1.5,
    },
    "variants": None,
    "train": {
        "scenarios": [],
        "samples": [],
        "anchors": None,
        "lr": 0.01,
        "steps": 500,
        "init_scale": 0.5,
        "params_out": "params.json",
        "network": {
            "d_h": 16,
            "h_p": 8,
            "h_f": 12,
            "grid_x": 13,
            "grid_y": 3,
            "cell_size": 4.0,
            "conv_channels": 8,
            "kernel_x": 3,
            "kernel_y": 3,
        },
    },
    "sweep": {
        "grid": {},
    },
}


def _merge_defaults(doc: dict, defaults: dict, where: str = "") -> dict:
    """Overlay a user document on the defaults, rejecting unknown keys."""
    out = copy.deepcopy(defaults)
    for key, value in doc.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key '{where}{key}'")
        default = defaults[key]
        if isinstance(default, dict) and isinstance(value, dict) \
                and key not in ("grid", "classes"):
            out[key] = _merge_defaults(value, default, f"{where}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    return _merge_defaults(doc, DEFAULT_CONFIG)


def parse_override_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_override(config: dict, dotted_key: str, value) -> None:
    """Set a nested key by dotted path; the key must already exist."""
    parts = dotted_key.split(".")
    node = config
    for i, part in enumerate(parts[:-1]):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown config key '{'.'.join(parts[:i + 1])}'")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"unknown config key '{dotted_key}'")
    node[leaf] = value


def apply_overrides(config: dict, assignments: list[str]) -> None:
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigError(f"override '{assignment}' is not KEY=VALUE")
        key, _, raw = assignment.partition("=")
        apply_override(config, key.strip(), parse_override_value(raw))


def write_effective_config(config: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=1, sort_keys=True)
        fh.write("\n")


def substream(root_seed: int, *names) -> np.random.Generator:
    """Named random substream; adding streams never shifts existing ones."""
    keys = [int(root_seed) & 0xFFFFFFFF]
    for name in names:
        if isinstance(name, int):
            keys.append(name & 0xFFFFFFFF)
        else:
            keys.append(zlib.crc32(str(name).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(keys))


def planner_from_config(section: dict) -> PlannerConfig:
    def tup(v):
        return tuple(v) if v is not None else None

    try:
        return PlannerConfig(
            lateral_offsets=tuple(section["lateral_offsets"]),
            speed_factors=tuple(section["speed_factors"]),
            terminal_speeds=tup(section["terminal_speeds"]),
            horizons=tuple(section["horizons"]),
            w_jerk=section["w_jerk"],
            w_time=section["w_time"],
            w_lat=section["w_lat"],
            w_vel=section["w_vel"],
            a_max=section["a_max"],
            v_max=section["v_max"],
            kappa_max=section["kappa_max"],
            omega_o=section["omega_o"],
            omega_u=section["omega_u"],
            j_mean_mode=section["j_mean_mode"],
            utility_rule=section["utility_rule"],
            risk_aggregation=section["risk_aggregation"],
            v_target=section["v_target"],
        )
    except Exception as exc:
        raise ConfigError(f"invalid planner config: {exc}") from exc


def harm_from_config(section: dict) -> HarmModel:
    try:
        classes = {
            cls: ClassHarmParams(beta0=p["beta0"], beta1=p["beta1"],
                                 kappa=p.get("kappa", 1.0))
            for cls, p in section["classes"].items()
        }
        return HarmModel(classes=classes,
                         truck_ego_multiplier=section["truck_ego_multiplier"])
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"invalid harm config: {exc}") from exc


def resolve_suite_paths(entries: list[str], base_dir: Path) -> list[Path]:
    """Expand a mix of scenario files and directories into sorted file paths."""
    if not entries:
        raise ConfigError("config 'suite' section is empty")
    paths: list[Path] = []
    for entry in entries:
        p = Path(entry)
        if not p.is_absolute():
            p = base_dir / p
        if p.is_dir():
            found = sorted(p.glob("*.json"))
            if not found:
                raise ConfigError(f"suite directory '{p}' contains no scenario files")
            paths.extend(found)
        elif p.exists():
            paths.append(p)
        else:
            raise ConfigError(f"suite entry '{entry}' does not exist")
    return paths


def variant_configs(config: dict) -> list[tuple[str, dict]]:
    """Materialize variant configs: base config plus each variant's overrides."""
    variants = config.get("variants")
    if not variants:
        p = config["planner"]
        name = f"wo{p['omega_o']:g}-wu{p['omega_u']:g}"
        return [(name, config)]
    out = []
    for i, spec in enumerate(variants):
        if not isinstance(spec, dict) or "name" not in spec:
            raise ConfigError(f"variants[{i}] must be an object with a 'name'")
        unknown = set(spec) - {"name", "set"}
        if unknown:
            raise ConfigError(
                f"unknown key '{sorted(unknown)[0]}' in variants[{i}]")
        var = copy.deepcopy(config)
        var["variants"] = None
        for key, value in spec.get("set", {}).items():
            apply_override(var, key, value)
        out.append((spec["name"], var))
    return out
