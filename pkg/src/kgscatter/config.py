"""Run configuration: parsing, normalization and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional

from .params import Params, as_fraction

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_real",
    "parse_rational",
    "load_config",
    "config_hash",
    "DEFAULTS",
]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


DEFAULTS: dict[str, Any] = {
    "params": {"n": 2, "gamma": "1.3", "beta": "1.8", "k": "1"},
    "mode": "exploratory",
    "seed": 0,
    "output": "out",
    "grid": {"points": 64, "box_length": "32pi"},
    "potential": {
        "backend": "truncated-kernel",
        "origin_rule": "cell-average",
        "coupling": "-1",
        "padded": False,
    },
    "data": {"family": "gaussian", "amplitude": "0.05", "sigma": "4", "k0": None},
    "integrator": {"dt": "0.01", "T": "1", "sample_every": None},
    "picard": {"dtau": "0.01", "iterations": 40, "tol": "0", "T": "2"},
    "scatter": {
        "problem": "forward",
        "T_start": "3pi",
        "literal_sign": False,
        "max_data_norm": None,
        "transient_fraction": "0.25",
        "xnorm": True,
    },
    "sweep": {
        "amplitude": None,
        "gamma": None,
        "beta": None,
        "points": None,
        "dt": None,
        "metrics": ["energy_drift", "contraction"],
    },
}

_PI = re.compile(r"^\s*([-+]?[0-9.eE+-]*)\s*\*?\s*pi\s*$")


def parse_real(value, name: str = "value") -> float:
    """Float from a number or decimal string; a trailing ``pi`` multiplies by pi."""
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        m = _PI.match(value)
        try:
            if m:
                coef = m.group(1)
                out = (float(coef) if coef not in ("", "+", "-") else float(coef + "1")) * math.pi
            else:
                out = float(value)
        except ValueError:
            raise ConfigError(f"{name}: cannot parse {value!r} as a real number") from None
    else:
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    if not math.isfinite(out):
        raise ConfigError(f"{name}: must be finite, got {value!r}")
    return out


def parse_rational(value, name: str = "value") -> Fraction:
    if isinstance(value, bool) or value is None:
        raise ConfigError(f"{name}: expected a rational, got {value!r}")
    try:
        return as_fraction(value)
    except (ValueError, TypeError, ZeroDivisionError):
        raise ConfigError(f"{name}: cannot parse {value!r} as an exact rational") from None


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path}{key!r}")
        if isinstance(base[key], dict) and val is not None:
            if not isinstance(val, dict):
                raise ConfigError(f"{path}{key}: expected an object")
            out[key] = _merge(base[key], val, f"{path}{key}.")
        else:
            out[key] = val
    return out


def config_hash(doc: dict) -> str:
    """Git-style blob hash of the canonical JSON, output location excluded."""
    body = {k: v for k, v in doc.items() if k != "output"}
    data = json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


@dataclass
class RunConfig:
    """Validated view of a config document; ``doc`` keeps the raw values."""

    doc: dict

    def __post_init__(self):
        d = self.doc
        p = d["params"]
        try:
            self.params = Params(
                int(p["n"]),
                parse_rational(p["gamma"], "params.gamma"),
                parse_rational(p["beta"], "params.beta"),
                parse_rational(p.get("k", 1), "params.k"),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"params: {exc}") from None
        if d["mode"] not in ("theorem", "exploratory"):
            raise ConfigError(f"mode must be 'theorem' or 'exploratory', got {d['mode']!r}")
        g = d["grid"]
        if not isinstance(g["points"], int) or isinstance(g["points"], bool):
            raise ConfigError("grid.points must be an integer")
        self.points = g["points"]
        self.box_length = parse_real(g["box_length"], "grid.box_length")
        pot = d["potential"]
        self.coupling = parse_real(pot["coupling"], "potential.coupling")
        data = d["data"]
        if data["family"] != "gaussian":
            raise ConfigError(f"unknown data family {data['family']!r}")
        self.amplitude = parse_real(data["amplitude"], "data.amplitude")
        self.sigma = parse_real(data["sigma"], "data.sigma")
        if not self.sigma > 0:
            raise ConfigError("data.sigma must be positive")
        k0 = data["k0"]
        self.k0 = None if k0 is None else [parse_real(v, "data.k0") for v in k0]
        it = d["integrator"]
        self.dt = parse_real(it["dt"], "integrator.dt")
        self.T = parse_real(it["T"], "integrator.T")
        self.sample_every = None if it["sample_every"] is None else parse_real(it["sample_every"], "integrator.sample_every")
        pc = d["picard"]
        self.dtau = parse_real(pc["dtau"], "picard.dtau")
        self.picard_T = parse_real(pc["T"], "picard.T")
        self.tol = parse_real(pc["tol"], "picard.tol")
        if not isinstance(pc["iterations"], int) or pc["iterations"] < 1:
            raise ConfigError("picard.iterations must be a positive integer")
        self.iterations = pc["iterations"]
        sc = d["scatter"]
        if sc["problem"] not in ("forward", "final-state"):
            raise ConfigError("scatter.problem must be 'forward' or 'final-state'")
        self.problem = sc["problem"]
        self.T_start = parse_real(sc["T_start"], "scatter.T_start")
        self.literal_sign = bool(sc["literal_sign"])
        self.max_data_norm = None if sc["max_data_norm"] is None else parse_real(sc["max_data_norm"], "scatter.max_data_norm")
        self.transient_fraction = parse_real(sc["transient_fraction"], "scatter.transient_fraction")
        for name in ("dt", "dtau"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        sw = d["sweep"]
        for key in ("amplitude", "gamma", "beta", "points", "dt"):
            if sw[key] is not None and not isinstance(sw[key], list):
                raise ConfigError(f"sweep.{key} must be a list or null")
        if not isinstance(sw["metrics"], list):
            raise ConfigError("sweep.metrics must be a list")

    @property
    def mode(self) -> str:
        return self.doc["mode"]

    @property
    def output(self) -> str:
        return self.doc["output"]

    @property
    def hash(self) -> str:
        return config_hash(self.doc)

    @property
    def gamma_float(self) -> float:
        return float(self.params.gamma)

    @property
    def beta_float(self) -> float:
        return float(self.params.beta)

    def with_overrides(self, **sections) -> "RunConfig":
        """Copy with ``section={key: value}`` replacements."""
        doc = copy.deepcopy(self.doc)
        for sec, vals in sections.items():
            if isinstance(doc[sec], dict):
                doc[sec].update(vals)
            else:
                doc[sec] = vals
        return RunConfig(doc)


def from_dict(raw: dict, mode: Optional[str] = None, output: Optional[str] = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    doc = _merge(DEFAULTS, raw)
    if mode is not None:
        doc["mode"] = mode
    if output is not None:
        doc["output"] = output
    return RunConfig(doc)


def load_config(path, mode: Optional[str] = None, output: Optional[str] = None) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return from_dict(raw, mode, output)
