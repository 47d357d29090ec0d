"""Experiment configuration: JSON schema, defaults and typed view.

A config file is a JSON document. Anything it omits is filled from the
per-environment defaults below, and the fully resolved document is what
gets echoed into every report, so no default is ever applied silently.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass

import jsonschema

from ..environments import DEFAULT_OMEGA, BeeWorldConfig, MarketMakerConfig
from ..errors import ConfigError, ESNRLError
from ..reservoir import StructuredInitSpec

__all__ = ["ExperimentConfig", "SCHEMA", "load_config", "resolve_config", "defaults_for"]

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_count = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["env"],
    "properties": {
        "env": {"enum": ["bee", "market_maker"]},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "mode": {"enum": ["offline_one_step", "online"]},
        "reservoir": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"const": "standard"},
                        "n": _count,
                        "weight_range": _pos,
                        "spectral_target": _pos,
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "N", "T0", "R", "M_T0"],
                    "properties": {
                        "kind": {"const": "structured"},
                        "N": _count,
                        "T0": {"type": "integer", "minimum": 0},
                        "R": _pos,
                        "M_T0": _pos,
                    },
                },
            ]
        },
        "gamma": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "lambda": _nonneg,
        "washout": {"type": "integer", "minimum": 0},
        "reward_alignment": {"enum": ["post", "pre"]},
        "train_steps": _count,
        "eval_steps": _count,
        "candidates": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "count": _count,
                "distribution": {"enum": ["uniform", "normal"]},
                "std": _pos,
            },
        },
        "bee": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "c": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "omega": _pos,
            },
        },
        "market_maker": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": _pos, "beta": _pos, "sigma": _pos, "epsilon": _pos,
                "r_base": _num, "eta": _nonneg, "sigma_i": _nonneg,
            },
        },
        "online": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "a": _pos,
                "b": _nonneg,
                "gamma_eff": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                "guard": _pos,
                "eval_points": _count,
            },
        },
        "histogram_bins": _count,
        "oracle": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps_pen": _pos,
                "tol": _pos,
                "horizon": _pos,
                "orientation": {"enum": ["ascent", "printed"]},
                "y0": _num,
                "v0": _num,
                "quad_points": {"type": "integer", "minimum": 64},
                "simulation_steps": _count,
                "simulation_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
            },
        },
    },
}

_COMMON = {
    "mode": "offline_one_step",
    "reservoir": {"kind": "standard", "n": 300, "weight_range": 0.05, "spectral_target": 1.0},
    "washout": 0,
    "reward_alignment": "post",
    "bee": {"c": 0.1, "omega": DEFAULT_OMEGA},
    "market_maker": {"alpha": 1.0, "beta": 1.0, "sigma": 1.0, "epsilon": 1.0, "r_base": 0.0,
                     "eta": 0.05, "sigma_i": 1.0},
    "online": {"a": 1.0, "b": 100.0, "gamma_eff": None, "guard": 1e6, "eval_points": 2000},
    "histogram_bins": 50,
    "oracle": {"eps_pen": 1e-5, "tol": 1e-8, "horizon": 250.0, "orientation": "ascent",
               "y0": 0.0, "v0": 0.0, "quad_points": 2000, "simulation_steps": 1_000_000,
               "simulation_seed": 0},
}

_PER_ENV = {
    "bee": {"gamma": 0.5, "lambda": 1e-9, "train_steps": 2000,
            "candidates": {"count": 100, "distribution": "uniform", "std": 1.0}},
    "market_maker": {"gamma": math.exp(-1.0), "lambda": 1e-6, "train_steps": 10_000,
                     "candidates": {"count": 100, "distribution": "normal", "std": 1.0}},
}


def defaults_for(env: str) -> dict:
    if env not in _PER_ENV:
        raise ConfigError(f"unknown env {env!r}")
    doc = copy.deepcopy(_COMMON)
    doc.update(copy.deepcopy(_PER_ENV[env]))
    doc["env"] = env
    return doc


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            if key == "reservoir" and val.get("kind") != out[key].get("kind"):
                out[key] = copy.deepcopy(val)
            else:
                out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve_config(doc: dict) -> dict:
    """Validate a raw document and fill every omitted field."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    full = _merge(defaults_for(doc["env"]), doc)
    full.setdefault("eval_steps", full["train_steps"])
    if full["candidates"]["distribution"] == "uniform" and full["env"] == "market_maker":
        raise ConfigError("market_maker candidates must be 'normal'")
    if full["candidates"]["distribution"] == "normal" and full["env"] == "bee":
        raise ConfigError("bee candidates must be 'uniform' on (-c, c)")
    if full["washout"] >= full["train_steps"] - 1:
        raise ConfigError("washout leaves no training rows")
    return full


@dataclass(frozen=True)
class ExperimentConfig:
    """Typed read-only view over a resolved config document."""

    doc: dict

    @classmethod
    def from_dict(cls, doc: dict, seed: int | None = None) -> "ExperimentConfig":
        doc = dict(doc)
        if seed is not None:
            doc["seed"] = int(seed)
        full = resolve_config(doc)
        cfg = cls(full)
        cfg.bee_config  # surface module-level validation as config errors
        cfg.mm_config
        return cfg

    def require_seed(self) -> int:
        if "seed" not in self.doc:
            raise ConfigError("no seed given: set 'seed' in the config or pass --seed")
        return int(self.doc["seed"])

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(self.doc, seed)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.doc)

    def to_json(self) -> str:
        return json.dumps(self.doc, sort_keys=True)

    def __getitem__(self, key):
        return self.doc[key]

    @property
    def env(self) -> str:
        return self.doc["env"]

    @property
    def seed(self) -> int:
        return self.require_seed()

    @property
    def mode(self) -> str:
        return self.doc["mode"]

    @property
    def bee_config(self) -> BeeWorldConfig:
        try:
            return BeeWorldConfig(**self.doc["bee"])
        except ESNRLError as exc:
            raise ConfigError(f"bee: {exc}") from None

    @property
    def mm_config(self) -> MarketMakerConfig:
        mm = {k: v for k, v in self.doc["market_maker"].items() if k not in ("eta", "sigma_i")}
        try:
            return MarketMakerConfig(**mm)
        except ESNRLError as exc:
            raise ConfigError(f"market_maker: {exc}") from None

    @property
    def structured_spec(self) -> StructuredInitSpec | None:
        r = self.doc["reservoir"]
        if r["kind"] != "structured":
            return None
        return StructuredInitSpec(r["N"], r["T0"], r["R"], r["M_T0"], 2)


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig.from_dict(doc, seed)
