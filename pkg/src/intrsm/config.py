"""Model configuration: JSON file, ``INTRSM_`` environment overrides, then flags.

A config names either a catalog example or an explicit operator/potential
pair.  Unknown keys are rejected by the schema.  Environment variables use
``__`` for nesting, e.g. ``INTRSM_POTENTIAL__THETA=1.5``; values are parsed
as JSON when possible and kept as strings otherwise.
"""
from __future__ import annotations

import copy
import json
import os
from typing import Optional

import jsonschema

from .catalog import NAMES, example
from .errors import ConfigError
from .profiles import OperatorSpec, PotentialSpec, Profile
from .rates import ModelSpec, WitnessSpec

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "example": {"enum": list(NAMES)},
        "operator": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "family": {"enum": ["FractionalLaplacian", "RelativisticLaplacian"]},
                "d": {"type": "integer", "minimum": 1},
                "a": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "m": _POS,
            },
        },
        "potential": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "family": {"enum": ["Power", "PowerLog", "PowerIterLog"]},
                "theta": _POS,
                "R0": _POS,
                "C2": {"type": "number", "minimum": 1},
            },
        },
        "witness": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "eta": {"enum": ["r_log2", "r_logr_loglog2", "power"]},
                "eta_p": {"type": "number", "exclusiveMinimum": 1},
                "sigma": {"enum": ["half", "shift"]},
                "sigma_c": _POS,
            },
        },
        "t": _POS,
        "constants": {
            "type": "object", "additionalProperties": False,
            "properties": {k: _POS for k in ("K", "K_tilde", "kappa", "kappa_tilde", "rho", "C6",
                                              "C", "C_tilde", "C_env", "C10", "T")}
            | {"lambda0": _NUM},
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "threads": {"type": "integer", "minimum": 1},
    },
    "anyOf": [{"required": ["example"]}, {"required": ["operator", "potential"]}],
}

ENV_PREFIX = "INTRSM_"


def _match_key(props: dict, name: str) -> str:
    for k in props:
        if k.lower() == name.lower():
            return k
    raise ConfigError(f"unknown configuration key {name!r}")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def env_overrides(environ=None) -> dict:
    """Nested dict built from INTRSM_* variables (``__`` separates levels)."""
    environ = os.environ if environ is None else environ
    out: dict = {}
    for key in sorted(environ):
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX):].split("__")
        node, props = out, SCHEMA["properties"]
        for i, part in enumerate(path):
            name = _match_key(props, part)
            if i == len(path) - 1:
                node[name] = _parse_value(environ[key])
            else:
                node = node.setdefault(name, {})
                props = props[name].get("properties", {})
    return out


def merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None


def load(path: Optional[str] = None, overrides: Optional[dict] = None, environ=None) -> dict:
    """File < environment < overrides; the merged dict is validated."""
    cfg: dict = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    cfg = merge(cfg, env_overrides(environ))
    if overrides:
        cfg = merge(cfg, overrides)
    validate(cfg)
    return cfg


def _witness_from(cfg: dict, fractional: bool) -> WitnessSpec:
    wc = cfg.get("witness", {})
    eta = wc.get("eta", "r_log2")
    if eta == "r_log2":
        e = Profile.eta_r_log2()
    elif eta == "r_logr_loglog2":
        e = Profile.eta_r_logr_loglog2()
    else:
        e = Profile.eta_power(wc.get("eta_p", 2.0))
    sig = wc.get("sigma", "half" if fractional else "shift")
    s = Profile.sigma_half() if sig == "half" else Profile.sigma_shift(wc.get("sigma_c", 1.0))
    return WitnessSpec(e, s)


def build(cfg: dict):
    """(ModelSpec, WitnessSpec, example name or None) from a validated config."""
    consts = dict(cfg.get("constants", {}))
    if "t" in cfg:
        consts["t"] = cfg["t"]
    try:
        if "example" in cfg:
            op = cfg.get("operator", {})
            ex = example(cfg["example"], theta=cfg.get("potential", {}).get("theta"),
                         d=op.get("d"), a=op.get("a"), m=op.get("m"), **consts)
            fractional = ex.spec.operator.family.value == "FractionalLaplacian"
            w = _witness_from(cfg, fractional) if "witness" in cfg else ex.witness
            return ex.spec, w, ex.name
        o, p = cfg["operator"], cfg["potential"]
        op = OperatorSpec(o.get("family", "FractionalLaplacian"), o.get("d", 1), o.get("a", 0.5),
                          o.get("m"))
        pot = PotentialSpec(p.get("family", "PowerLog"), p.get("theta", 1.0), p.get("R0"),
                            p.get("C2", 1.0))
        spec = ModelSpec(op, pot, **consts)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    return spec, _witness_from(cfg, op.family.value == "FractionalLaplacian"), None
