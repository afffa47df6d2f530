"""Run configuration for the command-line front end.

A configuration file is a JSON object::

    {"potential": "quartic" | {"slope_coefficients": [...]},
     "c0": 0.3, "c1": -0.3, "lambda0": 1.0, "lambda1": 1.0, "seed": 0,
     ... command parameters ...}

Every command parameter has a default (``DEFAULTS``); the resolved values are
echoed into each output file.  ``TELEWELL_SEED`` overrides the seed.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError
from .flow import RatePair
from .potential import QUARTIC, PotentialSpec, VelocityPair
from .telegraph import ProcessConfig

DEFAULTS: dict = {
    "x": 0.0,               # starting point
    "y": 1.0,               # target level
    "state": 0,             # initial chain state
    "xs": None,             # point grid (exit-prob); default: 41 points across G0
    "pairs": None,          # [[x, y], ...] (mfpt)
    "n": 100_000,           # Monte Carlo sample size
    "horizon": 20.0,        # trajectory length (simulate)
    "t_max": None,          # censoring time; default 1e4 / min(lambda)
    "grid": 400,            # density grid size
    "bins": 200,            # occupation histogram bins
    "burn_in": 1_000.0,     # occupation burn-in
    "occupation_horizon": 100_000.0,
    "attractor": None,      # "g_plus" | "g_minus" | "g_merged"; default per regime
    "variant": "derived",   # mean-passage formula variant
    "quad_tol": 1e-10,      # quadrature tolerance
    "sigmas": 3.0,          # statistical tolerance in standard errors
    "semigroup_h": 1e-3,
    "semigroup_n": 1_000_000,
    "reference_fraction": 0.5,
    "plot": False,
}

_NUMERIC = {"x", "y", "horizon", "burn_in", "occupation_horizon", "quad_tol", "sigmas",
            "semigroup_h", "reference_fraction"}
_POSITIVE = {"horizon", "occupation_horizon", "quad_tol", "sigmas", "semigroup_h"}
_COUNTS = {"n", "grid", "bins", "semigroup_n"}


def _number(name: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite")
    return value


def _potential(raw: Any) -> PotentialSpec:
    if raw is None or raw == "quartic":
        return QUARTIC
    if isinstance(raw, list):
        raw = {"slope_coefficients": raw}
    if not isinstance(raw, dict) or "slope_coefficients" not in raw:
        raise ConfigError("potential must be 'quartic', a coefficient list or {'slope_coefficients': [...]}")
    coeffs = raw["slope_coefficients"]
    if not isinstance(coeffs, list) or not coeffs:
        raise ConfigError("slope_coefficients must be a nonempty list")
    return PotentialSpec(tuple(_number("slope_coefficients", c) for c in coeffs), raw.get("label"))


@dataclass(frozen=True)
class RunConfig:
    potential: PotentialSpec
    c0: float
    c1: float
    lambda0: float
    lambda1: float
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.params[key]

    @property
    def process(self) -> ProcessConfig:
        return ProcessConfig(self.potential, VelocityPair(self.c0, self.c1),
                             RatePair(self.lambda0, self.lambda1), self.seed,
                             self.params["reference_fraction"])

    def to_dict(self) -> dict:
        return {"potential": self.potential.to_dict(), "c0": self.c0, "c1": self.c1,
                "lambda0": self.lambda0, "lambda1": self.lambda1, "seed": self.seed, **self.params}

    @classmethod
    def from_dict(cls, data: dict, env: Optional[dict] = None) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        env = os.environ if env is None else env
        known = {"potential", "c0", "c1", "lambda0", "lambda1", "seed"} | set(DEFAULTS)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        for key in ("c0", "c1", "lambda0", "lambda1"):
            if key not in data:
                raise ConfigError(f"missing required key {key!r}")
        c0, c1 = _number("c0", data["c0"]), _number("c1", data["c1"])
        l0, l1 = _number("lambda0", data["lambda0"]), _number("lambda1", data["lambda1"])
        if not (l0 > 0 and l1 > 0):
            raise ConfigError("switching rates must be positive")
        seed = data.get("seed", 0)
        if env.get("TELEWELL_SEED"):
            seed = env["TELEWELL_SEED"]
        try:
            seed = int(seed)
        except (TypeError, ValueError):
            raise ConfigError(f"seed must be an integer, got {seed!r}") from None
        if not 0 <= seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        params = dict(DEFAULTS)
        params.update({k: v for k, v in data.items() if k in DEFAULTS})
        _check_params(params)
        # constructing the pair validates c0 > c1 early
        VelocityPair(c0, c1)
        return cls(_potential(data.get("potential")), c0, c1, l0, l1, seed, params)

    @classmethod
    def load(cls, path, env: Optional[dict] = None) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from None
        return cls.from_dict(data, env)


def _check_params(p: dict) -> None:
    for key in _NUMERIC:
        p[key] = _number(key, p[key])
    for key in _POSITIVE:
        if not p[key] > 0:
            raise ConfigError(f"{key} must be positive")
    for key in _COUNTS:
        v = p[key]
        if isinstance(v, bool) or not isinstance(v, int) or v < 2:
            raise ConfigError(f"{key} must be an integer >= 2")
    if p["state"] not in (0, 1):
        raise ConfigError("state must be 0 or 1")
    if p["t_max"] is not None:
        p["t_max"] = _number("t_max", p["t_max"])
        if not p["t_max"] > 0:
            raise ConfigError("t_max must be positive")
    if not 0 <= p["burn_in"] < p["occupation_horizon"]:
        raise ConfigError("need 0 <= burn_in < occupation_horizon")
    if not 0 < p["reference_fraction"] < 1:
        raise ConfigError("reference_fraction must lie in (0, 1)")
    if p["variant"] not in ("derived", "printed"):
        raise ConfigError("variant must be 'derived' or 'printed'")
    if p["attractor"] not in (None, "g_plus", "g_minus", "g_merged"):
        raise ConfigError("attractor must be g_plus, g_minus or g_merged")
    if p["xs"] is not None:
        if not isinstance(p["xs"], list) or not p["xs"]:
            raise ConfigError("xs must be a nonempty list")
        p["xs"] = [_number("xs", v) for v in p["xs"]]
    if p["pairs"] is not None:
        if not isinstance(p["pairs"], list) or not all(isinstance(q, list) and len(q) == 2 for q in p["pairs"]):
            raise ConfigError("pairs must be a list of [x, y] pairs")
        p["pairs"] = [[_number("pairs", a), _number("pairs", b)] for a, b in p["pairs"]]
    if not isinstance(p["plot"], bool):
        raise ConfigError("plot must be true or false")
