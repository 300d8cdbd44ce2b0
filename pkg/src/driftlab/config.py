"""Run configuration: JSON schema, loading and resolution."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

__all__ = ["ConfigError", "SCHEMA", "load_config", "resolve_config"]

_vec = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_box = {"type": "array", "items": {"type": "array", "items": {"type": "number"},
                                    "minItems": 2, "maxItems": 2}, "minItems": 1}
_set = {
    "type": "object",
    "properties": {"box": _box, "ball": {"type": "number", "minimum": 0}, "open": {"type": "boolean"}},
    "additionalProperties": False,
}
_H = {
    "type": "object",
    "properties": {
        "constant": _vec,
        "affine": {"type": "object", "properties": {"alpha": {"type": "number"},
                                                    "beta": {"oneOf": [{"type": "number"}, _vec]}},
                   "required": ["alpha", "beta"], "additionalProperties": False},
    },
    "minProperties": 1, "maxProperties": 1, "additionalProperties": False,
}
_network = {
    "type": "object",
    "properties": {
        "species": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "reactions": {"type": "array", "minItems": 1, "items": {
            "type": "object",
            "properties": {
                "reactants": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
                "products": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
                "rate": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["rate"], "additionalProperties": False}},
        "mass_action": {"enum": ["stochastic", "deterministic"]},
    },
    "required": ["species", "reactions"], "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "notes": {},
        "model": {
            "type": "object",
            "properties": {
                "walk": {"type": "object", "properties": {"preset": {"type": "string"}, "params": {"type": "object"}},
                         "required": ["preset"], "additionalProperties": False},
                "ifs": {"type": "object"},
                "brn": {"type": "object", "properties": {
                    "network": _network, "x0": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                    "rho": {"type": "number", "minimum": 0}, "H": _H},
                    "required": ["network", "x0"], "additionalProperties": False},
                "plugin": {"type": "object", "properties": {
                    "factory": {"type": "string", "pattern": "^[A-Za-z_][\\w.]*:[A-Za-z_]\\w*$"},
                    "params": {"type": "object"}}, "required": ["factory"], "additionalProperties": False},
                "martingale": {"type": "object", "properties": {"name": {"type": "string"}},
                               "required": ["name"]},
            },
            "minProperties": 1, "maxProperties": 1, "additionalProperties": False,
        },
        "check": {
            "type": "object",
            "properties": {
                "p": {"type": "number"},
                "rho": {"type": "number", "minimum": 0},
                "L": {"type": ["number", "null"]},
                "H": _H,
                "region": {"type": "object", "properties": {
                    "box": _box, "states": {"type": "array", "items": _vec},
                    "random": {"type": "object", "properties": {
                        "box": _box, "count": {"type": "integer", "minimum": 1}},
                        "required": ["box", "count"], "additionalProperties": False}},
                    "minProperties": 1, "maxProperties": 1, "additionalProperties": False},
                "on_c": {"type": "object", "properties": {"box": _box, "states": {"type": "array", "items": _vec}},
                         "minProperties": 1, "maxProperties": 1, "additionalProperties": False},
                "n_range": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "samples": {"type": "integer", "minimum": 2},
                "tolerance": {"type": ["number", "null"], "minimum": 0},
            },
            "additionalProperties": False,
        },
        "simulate": {
            "type": "object",
            "properties": {
                "horizon": {"type": "integer", "minimum": 1},
                "replications": {"type": "integer", "minimum": 1},
                "r": {"type": "number", "exclusiveMinimum": 0},
                "p": {"type": "number"},
                "variant": {"enum": ["conditional", "unconditional"]},
                "exponent_tol": {"type": "number", "exclusiveMinimum": 0},
                "window_tol": {"type": "number", "exclusiveMinimum": 0},
                "t_end": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "invariant": {
            "type": "object",
            "properties": {
                "horizon": {"type": "integer", "minimum": 1},
                "replications": {"type": "integer", "minimum": 1},
                "box": _box,
                "boundary": {"enum": ["reject", "reflect"]},
                "kappa": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "transfer": {"type": "boolean"},
                "weak_feller_attested": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "martlab": {
            "type": "object",
            "properties": {
                "p": {"type": "number"},
                "r": {"type": "number", "minimum": 0},
                "n_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "tail_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "tau_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "tau_r": {"type": "number", "minimum": 0},
                "replications": {"type": "integer", "minimum": 1},
                "tau_replications": {"type": "integer", "minimum": 1},
                "slack": {"type": "number", "minimum": 0},
                "tau_slack": {"type": "number", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"dir": {"type": "string"},
                           "formats": {"type": "array", "items": {"enum": ["json", "csv"]}}},
            "additionalProperties": False,
        },
    },
    "required": ["model"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def resolve_config(raw: dict, seed: int | None = None) -> dict:
    """Validate ``raw`` and apply the seed override; the seed is mandatory."""
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a JSON object")
    cfg = copy.deepcopy(raw)
    if seed is not None:
        cfg["seed"] = int(seed)
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        raise ConfigError(_pointer(err.absolute_path), err.message)
    if "seed" not in cfg:
        raise ConfigError("/seed", "a seed is required (set it in the config or pass --seed)")
    return cfg


def load_config(path: str | Path, seed: int | None = None) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("", f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return resolve_config(raw, seed)
