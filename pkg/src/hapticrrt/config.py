"""Scenario configuration documents (JSON): schema, loading, overrides."""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path

import jsonschema

from .geometry import ConfigError

_vec = {"type": "array", "items": {"type": "number"}}
_dof = {"oneOf": [{"type": "null"}, {"type": "string", "pattern": "^[zu][0-9]+$"}]}

SCHEMA = {
    "type": "object",
    "required": ["scenario", "params", "control_bounds", "start"],
    "additionalProperties": False,
    "properties": {
        "scenario": {"enum": ["pendulum", "clip", "bookshelf"]},
        "description": {"type": "string"},
        "params": {"type": "object"},
        "shapes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "a1", "a2", "eps"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "a1": {"type": "number", "exclusiveMinimum": 0},
                    "a2": {"type": "number", "exclusiveMinimum": 0},
                    "eps": {"type": "number", "exclusiveMinimum": 0},
                    "pose": {**_vec, "minItems": 3, "maxItems": 3},
                    "attachment": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "dofs": {"type": "array", "items": _dof, "minItems": 3, "maxItems": 3},
                            "offset": {**_vec, "minItems": 3, "maxItems": 3},
                        },
                    },
                    "corners": _vec,
                },
            },
        },
        "contacts": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
        },
        "stiffness": {
            "type": "object",
            "required": ["k_min", "k_max", "d0"],
            "additionalProperties": False,
            "properties": {
                "k_min": {"type": "number", "minimum": 0},
                "k_max": {"type": "number", "exclusiveMinimum": 0},
                "d0": {"type": "number", "exclusiveMinimum": 0},
                "proxy_restarts": {"type": "integer", "minimum": 4},
            },
        },
        "control_bounds": {
            "type": "object",
            "required": ["lo", "hi"],
            "additionalProperties": False,
            "properties": {"lo": _vec, "hi": _vec},
        },
        "state_bounds": {
            "type": "object",
            "required": ["lo", "hi"],
            "additionalProperties": False,
            "properties": {"lo": _vec, "hi": _vec},
        },
        "start": {
            "type": "object",
            "required": ["z", "u"],
            "additionalProperties": False,
            "properties": {"z": _vec, "u": _vec},
        },
        "goal": {
            "type": "object",
            "required": ["kind", "center", "radius"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["state-region", "control-region"]},
                "center": _vec,
                "radius": _vec,
                "indices": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "periodic": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
        },
        "planner": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "lambda": {"type": "number", "exclusiveMinimum": 0},
                "beta": {"type": "number", "minimum": 0},
                "sigma": {"type": "array", "items": _vec},
                "w_shift": {"type": "number", "exclusiveMinimum": 0},
                "max_nodes": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "eta": {"type": "number", "minimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "stop_at_goal": {"type": "boolean"},
            },
        },
        "branches": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lattice": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "dedup_radius": {"type": "number", "exclusiveMinimum": 0},
                "link_radius": {"type": "number", "minimum": 0},
                "grid": {
                    "type": "object",
                    "required": ["axes", "lo", "hi", "n"],
                    "additionalProperties": False,
                    "properties": {
                        "axes": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                 "minItems": 2, "maxItems": 2},
                        "lo": {**_vec, "minItems": 2, "maxItems": 2},
                        "hi": {**_vec, "minItems": 2, "maxItems": 2},
                        "n": {"type": "array", "items": {"type": "integer", "minimum": 1},
                              "minItems": 2, "maxItems": 2},
                    },
                },
            },
        },
    },
}


def validate(cfg: dict) -> dict:
    """Raise ``ConfigError`` listing every offending key path."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            path = "/".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"{path}: {e.message}")
        raise ConfigError("invalid scenario config:\n  " + "\n  ".join(lines))
    return cfg


def loads(text: str) -> dict:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return validate(cfg)


def load(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def dumps(cfg: dict) -> str:
    # repr-based float output is the shortest exact round trip
    return json.dumps(cfg, indent=2, sort_keys=False) + "\n"


def shipped(name: str) -> dict:
    """One of the bundled scenario configs: ``pendulum``, ``clip`` or ``bookshelf``."""
    text = resources.files("hapticrrt.data").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return loads(text)


def shipped_path(name: str) -> Path:
    return Path(str(resources.files("hapticrrt.data").joinpath(f"{name}.json")))


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``key.path=value`` overrides; values parse as JSON, falling back to strings."""
    out = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.strip().split(".")
        for p in parts[:-1]:
            if isinstance(node, list):
                node = node[int(p)]
            else:
                node = node.setdefault(p, {})
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    return validate(out)
