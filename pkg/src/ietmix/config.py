"""Experiment configuration: schema validation and object construction."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import jsonschema

from .correlation import BumpObservable, bump_from_config
from .errors import PreconditionError
from .iet import Iet, golden_iet, iet_from_config
from .presets import GOLDEN_K, arnold_torus, default_observables
from .roof import LogRoof, roof_from_config
from .surface import TorusHamiltonianFlow, flow_from_config

CONFIG_DIR_ENV = "IETMIX_CONFIG_DIR"

_rational = {"type": ["string", "number", "integer"]}
_numbers = {"type": "array", "items": {"type": "number"}}
_bump = {
    "type": "object",
    "required": ["amp", "xc", "wx", "yc", "wy"],
    "properties": {k: _numbers for k in ("amp", "xc", "wx", "yc", "wy")},
    "additionalProperties": False,
}
_trig = {
    "type": "object",
    "properties": {
        "constant": {"type": "number"},
        "terms": {"type": "array", "items": {"type": "array", "minItems": 4, "maxItems": 4}},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "preset": {"enum": ["golden-asym", "golden-sym", "arnold-torus"]},
        "iet": {
            "type": "object",
            "properties": {
                "permutation": {"type": "array", "items": {"type": "integer"}, "minItems": 2},
                "top": {"type": "array", "items": {"type": "integer"}},
                "bottom": {"type": "array", "items": {"type": "integer"}},
                "lengths": {"type": "array", "items": _rational, "minItems": 2},
                "golden": {"type": "integer", "minimum": 3},
            },
            "additionalProperties": False,
        },
        "roof": {
            "type": "object",
            "required": ["C_plus", "C_minus"],
            "properties": {
                "singularities": {"type": "array", "items": _rational},
                "C_plus": {"type": "array", "items": _rational},
                "C_minus": {"type": "array", "items": _rational},
                "smooth": {
                    "type": "object",
                    "properties": {"constant": _rational, "cos": _numbers, "sin": _numbers},
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "dc": {
            "type": "object",
            "properties": {
                "nu_cap": {"type": "number", "exclusiveMinimum": 0},
                "kappa_cap": {"type": "number", "exclusiveMinimum": 0},
                "lbar": {"type": "integer", "minimum": 1},
                "tau": {"type": "number"},
                "tau_prime": {"type": "number"},
                "min_spacing": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "run": {
            "type": "object",
            "properties": {
                "seed": {"type": "integer", "minimum": 0},
                "samples": {"type": "integer", "minimum": 1},
                "t_grid": _numbers,
                "r_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "threads": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "observables": {
            "type": "object",
            "properties": {"g": _bump, "h": _bump, "reference": _bump, "delta_supp": {"type": "number"}},
            "additionalProperties": False,
        },
        "flow": {
            "type": "object",
            "required": ["cx", "P", "V"],
            "properties": {"cx": {"type": "number"}, "cy": {"type": "number"}, "P": _trig, "V": _trig},
            "additionalProperties": False,
        },
        "output": {"type": "object", "properties": {"dir": {"type": "string"}}, "additionalProperties": False},
    },
    "additionalProperties": False,
}

DC_DEFAULTS = {"nu_cap": 3.0, "kappa_cap": 3.0, "lbar": 1, "tau": 1.5, "tau_prime": 0.9, "min_spacing": 2}
RUN_DEFAULTS = {"seed": 0, "samples": 100_000, "t_grid": [10 ** (1 + k / 2) for k in range(7)],
                "r_grid": [2**k for k in range(10, 21)], "threads": 1}


class ConfigError(PreconditionError):
    """Schema violation or inconsistent configuration."""


def validate(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {path}: {exc.message}") from exc
    return cfg


def resolve_path(path: str | os.PathLike) -> Path:
    """Resolve relative config paths against ``$IETMIX_CONFIG_DIR`` when the file is not found as given."""
    p = Path(path)
    if not p.exists() and not p.is_absolute() and os.environ.get(CONFIG_DIR_ENV):
        alt = Path(os.environ[CONFIG_DIR_ENV]) / p
        if alt.exists():
            return alt
    return p


def load(path: str | os.PathLike) -> dict:
    p = resolve_path(path)
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {p} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    return validate(cfg)


def preset_config(name: str) -> dict:
    if name in ("golden-asym", "golden-sym"):
        cm = 2.0 if name == "golden-asym" else 1.0
        g, h = default_observables()
        cfg = {
            "preset": name,
            "iet": {"golden": GOLDEN_K},
            "roof": {"C_plus": [1.0], "C_minus": [cm]},
            "observables": {"g": g.to_config(), "h": h.to_config()},
        }
    elif name == "arnold-torus":
        cfg = {"preset": name, "flow": arnold_torus().to_config()}
    else:
        raise ConfigError(f"unknown preset {name!r}")
    return validate(cfg)


def build_iet(cfg: dict) -> Iet:
    section = cfg.get("iet")
    if section is None:
        raise ConfigError("config has no iet section")
    if "golden" in section:
        return golden_iet(section["golden"])
    return iet_from_config(section)


def build_roof(cfg: dict, iet: Iet) -> LogRoof:
    if "roof" not in cfg:
        raise ConfigError("config has no roof section")
    return roof_from_config(cfg["roof"], iet)


def build_observables(cfg: dict) -> tuple[BumpObservable, BumpObservable]:
    obs = cfg.get("observables", {})
    if "g" not in obs or "h" not in obs:
        raise ConfigError("correlation needs observables g and h")
    g = bump_from_config(obs["g"])
    if "reference" in obs:
        g = g.with_zero_mean(bump_from_config(obs["reference"]))
    return g, bump_from_config(obs["h"])


def build_flow(cfg: dict) -> TorusHamiltonianFlow:
    if "flow" not in cfg:
        raise ConfigError("config has no flow section")
    return flow_from_config(cfg["flow"])


def with_defaults(cfg: dict) -> dict:
    """Copy of ``cfg`` with every defaulted dc and run parameter filled in."""
    out = json.loads(json.dumps(cfg))
    out["dc"] = {**DC_DEFAULTS, **cfg.get("dc", {})}
    out["run"] = {**RUN_DEFAULTS, **cfg.get("run", {})}
    return out


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode("ascii")).hexdigest()
