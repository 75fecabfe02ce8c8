"""JSON config schema: parsing, validation with field paths, and the model /
experiment / optimizer constructors used by the command line."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

from .harness import TiltPolicy
from .minimize import EventSpec, FixedEndpoint, SupBall, TerminalInterval
from .paths import GridPath
from .piecewise import (NonElliptic, PiecewiseFunction, SdeModel, Segment,
                        UnboundedGrowth)

__all__ = ["ConfigError", "ModelError", "Config", "load_config"]


class ConfigError(ValueError):
    """Schema violation, carrying the offending field path."""

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")

    def to_json(self) -> dict:
        return {"kind": "ConfigError", "field": self.field, "message": self.message}


class ModelError(ValueError):
    """Coefficient bound failure (growth or ellipticity)."""

    def to_json(self) -> dict:
        return {"kind": "ModelError", "message": str(self)}


@dataclass(frozen=True)
class Experiment:
    epsilons: tuple
    n_paths: int
    h: float
    event: EventSpec
    tilt: TiltPolicy


@dataclass(frozen=True)
class Optimize:
    n: int = 100
    restarts: int = 8


@dataclass(frozen=True)
class Config:
    model: SdeModel
    experiment: Optional[Experiment]
    optimize: Optimize
    raw: dict


def _need(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
    return obj[key]


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {type(value).__name__}")
    return float(value)


def _int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {type(value).__name__}")
    return value


def _list(value, path: str) -> list:
    if not isinstance(value, list):
        raise ConfigError(path, f"expected a list, got {type(value).__name__}")
    return value


def _dict(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected an object, got {type(value).__name__}")
    return value


def _parse_segments(obj: dict, n_needed: int, path: str):
    segs = []
    raw = _list(_need(obj, "segments", path), f"{path}.segments")
    if len(raw) != n_needed:
        raise ConfigError(f"{path}.segments", f"expected {n_needed} segments, got {len(raw)}")
    for k, s in enumerate(raw):
        sp = f"{path}.segments[{k}]"
        s = _dict(s, sp)
        kind = _need(s, "kind", sp)
        if kind not in ("constant", "affine"):
            raise ConfigError(f"{sp}.kind", f"expected 'constant' or 'affine', got {kind!r}")
        c0 = _num(_need(s, "c0", sp), f"{sp}.c0")
        c1 = _num(s.get("c1", 0.0), f"{sp}.c1")
        if kind == "constant" and c1 != 0.0:
            raise ConfigError(f"{sp}.c1", "constant segment must have c1 == 0")
        segs.append(Segment(kind, c0, c1))
    at = obj.get("at_breakpoints")
    at_vals = None
    if at is not None:
        at = _list(at, f"{path}.at_breakpoints")
        if len(at) != n_needed - 1:
            raise ConfigError(f"{path}.at_breakpoints",
                              f"expected {n_needed - 1} values, got {len(at)}")
        at_vals = [None if v is None else _num(v, f"{path}.at_breakpoints[{k}]")
                   for k, v in enumerate(at)]
    return segs, at_vals


def parse_model(obj: dict, path: str = "model") -> SdeModel:
    obj = _dict(obj, path)
    bps = [_num(z, f"{path}.breakpoints[{k}]")
           for k, z in enumerate(_list(_need(obj, "breakpoints", path), f"{path}.breakpoints"))]
    if any(b >= c for b, c in zip(bps, bps[1:])):
        raise ConfigError(f"{path}.breakpoints", "must be strictly increasing")
    clamp = _num(_need(obj, "clamp_radius", path), f"{path}.clamp_radius")
    if clamp <= 0:
        raise ConfigError(f"{path}.clamp_radius", "must be positive")
    x0 = _num(_need(obj, "x0", path), f"{path}.x0")
    T = _num(_need(obj, "T", path), f"{path}.T")
    if T <= 0:
        raise ConfigError(f"{path}.T", "must be positive")
    a_segs, a_at = _parse_segments(_dict(_need(obj, "a", path), f"{path}.a"),
                                   len(bps) + 1, f"{path}.a")
    s_segs, s_at = _parse_segments(_dict(_need(obj, "sigma", path), f"{path}.sigma"),
                                   len(bps) + 1, f"{path}.sigma")
    a = PiecewiseFunction(bps, a_segs, a_at, clamp)
    sigma = PiecewiseFunction(bps, s_segs, s_at, clamp)
    try:
        return SdeModel.build(a, sigma, x0, T)
    except (NonElliptic, UnboundedGrowth) as e:
        raise ModelError(str(e)) from None


def parse_event(obj: dict, path: str = "experiment.event") -> EventSpec:
    obj = _dict(obj, path)
    kind = _need(obj, "kind", path)
    if kind == "fixed_endpoint":
        return FixedEndpoint(_num(_need(obj, "b", path), f"{path}.b"))
    if kind == "terminal_interval":
        lo = _num(_need(obj, "l", path), f"{path}.l")
        hi = _num(_need(obj, "u", path), f"{path}.u")
        if lo > hi:
            raise ConfigError(f"{path}.l", "need l <= u")
        return TerminalInterval(lo, hi)
    if kind == "sup_ball":
        delta = _num(_need(obj, "delta", path), f"{path}.delta")
        if delta <= 0:
            raise ConfigError(f"{path}.delta", "must be positive")
        ref = _dict(_need(obj, "reference", path), f"{path}.reference")
        T = _num(_need(ref, "T", f"{path}.reference"), f"{path}.reference.T")
        vals = _list(_need(ref, "values", f"{path}.reference"), f"{path}.reference.values")
        if len(vals) < 2:
            raise ConfigError(f"{path}.reference.values", "need at least two values")
        vals = [_num(v, f"{path}.reference.values[{k}]") for k, v in enumerate(vals)]
        return SupBall(GridPath(T, vals), delta)
    raise ConfigError(f"{path}.kind",
                      "expected 'fixed_endpoint', 'terminal_interval' or 'sup_ball'")


def parse_experiment(obj: dict, path: str = "experiment") -> Experiment:
    obj = _dict(obj, path)
    eps = [_num(e, f"{path}.epsilons[{k}]")
           for k, e in enumerate(_list(_need(obj, "epsilons", path), f"{path}.epsilons"))]
    if not eps or any(e <= 0 for e in eps):
        raise ConfigError(f"{path}.epsilons", "need positive noise levels")
    n_paths = _int(_need(obj, "n_paths", path), f"{path}.n_paths")
    if n_paths < 1:
        raise ConfigError(f"{path}.n_paths", "must be at least 1")
    h = _num(_need(obj, "h", path), f"{path}.h")
    if h <= 0:
        raise ConfigError(f"{path}.h", "must be positive")
    event = parse_event(_need(obj, "event", path), f"{path}.event")
    tilt_obj = obj.get("tilt")
    if tilt_obj is None:
        tilt = TiltPolicy()
    else:
        tilt_obj = _dict(tilt_obj, f"{path}.tilt")
        enabled = tilt_obj.get("enabled", False)
        if not isinstance(enabled, bool):
            raise ConfigError(f"{path}.tilt.enabled", "expected a boolean")
        gamma = _num(tilt_obj.get("gamma", 0.5), f"{path}.tilt.gamma")
        if gamma <= 0:
            raise ConfigError(f"{path}.tilt.gamma", "must be positive")
        tilt = TiltPolicy(enabled, gamma)
    return Experiment(tuple(eps), n_paths, h, event, tilt)


def parse_optimize(obj: Optional[dict], path: str = "optimize") -> Optimize:
    if obj is None:
        return Optimize()
    obj = _dict(obj, path)
    n = _int(obj.get("n", 100), f"{path}.n")
    if n < 2:
        raise ConfigError(f"{path}.n", "need n >= 2")
    restarts = _int(obj.get("restarts", 8), f"{path}.restarts")
    if restarts < 1:
        raise ConfigError(f"{path}.restarts", "need at least one restart")
    return Optimize(n, restarts)


def load_config(path, need_experiment: bool = False) -> Config:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("", f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError("", f"invalid JSON: {e}") from None
    raw = _dict(raw, "")
    model = parse_model(_need(raw, "model", ""))
    exp = None
    if "experiment" in raw:
        exp = parse_experiment(raw["experiment"])
    elif need_experiment:
        raise ConfigError("experiment", "missing required field")
    opt = parse_optimize(raw.get("optimize"))
    if exp is not None and exp.h > model.T:
        raise ConfigError("experiment.h", "step must not exceed the horizon T")
    return Config(model, exp, opt, raw)
