"""Experiment configuration: a single JSON document, validated with field paths.

Schema (keys not listed are rejected)::

    {
      "name": str,                     # required
      "seed": int,                     # default 0
      "truncation": {"mass", "box_length", "mode_cutoff", "n_max", "x_points"},
      "polynomial": {"<power>": coefficient, ...},
      "functions": {"<name>": [{"center": [t, x], "radii": [rt, rx | null],
                                "amplitude": a}, ...]},
      "stepper": {"dt", "rule", "kind", "levels", "margin"},
      "checks": ["<check>" | {"name": "<check>", ...check parameters}],
      "sweep": {"axis": str, "values": [..], "function": str},
      "output": {"dir": str, "dump": ["<function>", ...]},
      "workers": int
    }

``box_length`` and bump centres also accept the strings "pi" and "<c>pi"
(e.g. "2pi") so that configs can state exact multiples of pi.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..errors import ConfigInvalid, SupportOutsideGrid
from ..fock import TruncationParams
from ..generators import SPECTRAL_CUTOFF, YOSIDA
from ..scattering import StepperConfig
from ..stepper import LEFT, MIDPOINT
from ..testfunctions import LocalizationFunction, bump, zero_function

SCHEMA_VERSION = 1
SWEEP_AXES = ("dt", "n_max", "K", "approx_level", "amplitude")

_TOP_KEYS = {"name", "seed", "truncation", "polynomial", "functions", "stepper", "checks",
             "sweep", "output", "workers", "schema_version", "description"}
_TRUNC_KEYS = {"mass", "box_length", "mode_cutoff", "n_max", "x_points"}
_STEP_KEYS = {"dt", "rule", "kind", "levels", "margin"}
_BUMP_KEYS = {"center", "radii", "amplitude"}


def _number(value, path, positive=False, integer=False):
    if isinstance(value, str):
        value = _pi_literal(value, path)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigInvalid(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigInvalid(path, "must be finite")
    if integer and (not isinstance(value, int)):
        raise ConfigInvalid(path, f"expected an integer, got {value!r}")
    if positive and not value > 0:
        raise ConfigInvalid(path, f"must be positive, got {value!r}")
    return value


def _pi_literal(text, path):
    s = text.strip().replace(" ", "").replace("*", "")
    if s.endswith("pi"):
        head = s[:-2]
        try:
            return (float(head) if head else 1.0) * math.pi
        except ValueError:
            pass
    raise ConfigInvalid(path, f"cannot read {text!r} as a number")


def _mapping(value, path, allowed=None):
    if not isinstance(value, dict):
        raise ConfigInvalid(path, f"expected an object, got {type(value).__name__}")
    if allowed is not None:
        extra = sorted(set(value) - allowed)
        if extra:
            raise ConfigInvalid(f"{path}.{extra[0]}", "unknown field")
    return value


@dataclass(frozen=True)
class CheckSpec:
    name: str
    params: dict
    path: str


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    function: str = "g"


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    truncation: TruncationParams
    polynomial: dict
    functions: dict              # name -> tuple of bump dicts (normalized)
    stepper: StepperConfig
    checks: list
    sweep: Optional[SweepSpec]
    out_dir: Optional[str]
    dump: tuple
    workers: int
    raw: dict = field(repr=False, default_factory=dict)

    def function(self, name: str) -> LocalizationFunction:
        return build_function(self.functions[name], self.truncation.box_length, name)

    def hash(self) -> str:
        return config_hash(self.raw)

    def with_changes(self, **changes) -> "ExperimentConfig":
        """Validated copy with top-level sections replaced (used by sweeps)."""
        raw = copy.deepcopy(self.raw)
        for key, value in changes.items():
            if isinstance(value, dict) and isinstance(raw.get(key), dict):
                raw[key].update(value)
            else:
                raw[key] = value
        return parse_config(raw)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(raw: dict) -> str:
    return hashlib.sha256(canonical_json(raw).encode()).hexdigest()


def build_function(bumps, box_length: float, label: str) -> LocalizationFunction:
    out = zero_function(box_length)
    for b in bumps:
        out = out + bump(b["center"], b["radii"], b["amplitude"], box_length, label=label)
    return LocalizationFunction(out.terms, box_length, label)


def _parse_truncation(value, path):
    value = _mapping(value, path, _TRUNC_KEYS)
    kw = {}
    for key in ("mass", "box_length"):
        if key in value:
            kw[key] = float(_number(value[key], f"{path}.{key}", positive=True))
    for key in ("mode_cutoff", "n_max", "x_points"):
        if key in value:
            v = _number(value[key], f"{path}.{key}", integer=True)
            if v < (1 if key == "x_points" else 0):
                raise ConfigInvalid(f"{path}.{key}", f"out of range: {v}")
            kw[key] = v
    return TruncationParams(**kw)


def _parse_polynomial(value, path):
    value = _mapping(value, path)
    poly = {}
    for key, coeff in value.items():
        try:
            power = int(key)
        except ValueError:
            raise ConfigInvalid(f"{path}.{key}", "powers must be integers") from None
        if power < 1:
            raise ConfigInvalid(f"{path}.{key}", "powers must be >= 1")
        poly[power] = float(_number(coeff, f"{path}.{key}"))
    return poly


def _parse_bump(value, path, box_length):
    value = _mapping(value, path, _BUMP_KEYS)
    for key in ("center", "radii"):
        if key not in value:
            raise ConfigInvalid(f"{path}.{key}", "required")
        if not isinstance(value[key], list) or len(value[key]) != 2:
            raise ConfigInvalid(f"{path}.{key}", "expected a pair [t, x]")
    center = [float(_number(c, f"{path}.center[{i}]")) for i, c in enumerate(value["center"])]
    rt = float(_number(value["radii"][0], f"{path}.radii[0]", positive=True))
    rx = value["radii"][1]
    if rx is not None:
        rx = float(_number(rx, f"{path}.radii[1]", positive=True))
    amplitude = float(_number(value.get("amplitude", 1.0), f"{path}.amplitude"))
    spec = {"center": center, "radii": [rt, rx], "amplitude": amplitude}
    try:
        bump(center, (rt, rx), amplitude, box_length)
    except SupportOutsideGrid as exc:
        raise ConfigInvalid(path, str(exc)) from None
    return spec


def _parse_stepper(value, path):
    value = _mapping(value, path, _STEP_KEYS)
    kw = {}
    if "dt" in value:
        kw["dt"] = float(_number(value["dt"], f"{path}.dt", positive=True))
    if "rule" in value:
        if value["rule"] not in (MIDPOINT, LEFT):
            raise ConfigInvalid(f"{path}.rule", "expected 'midpoint' or 'left'")
        kw["rule"] = value["rule"]
    if "kind" in value:
        if value["kind"] not in (SPECTRAL_CUTOFF, YOSIDA):
            raise ConfigInvalid(f"{path}.kind", "expected 'spectral_cutoff' or 'yosida'")
        kw["kind"] = value["kind"]
    if value.get("levels") is not None:
        levels = value["levels"]
        if not isinstance(levels, list) or not levels:
            raise ConfigInvalid(f"{path}.levels", "expected a nonempty list")
        levels = [float(_number(v, f"{path}.levels[{i}]", positive=True))
                  for i, v in enumerate(levels)]
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigInvalid(f"{path}.levels", "levels must be strictly increasing")
        kw["levels"] = tuple(levels)
    if "margin" in value:
        kw["margin"] = float(_number(value["margin"], f"{path}.margin", positive=True))
    return StepperConfig(**kw)


def _parse_checks(value, path, known):
    if not isinstance(value, list):
        raise ConfigInvalid(path, "expected a list")
    out = []
    for i, item in enumerate(value):
        p = f"{path}[{i}]"
        if isinstance(item, str):
            item = {"name": item}
        item = _mapping(item, p)
        name = item.get("name")
        if not isinstance(name, str):
            raise ConfigInvalid(f"{p}.name", "required string")
        if known is not None and name not in known:
            raise ConfigInvalid(f"{p}.name", f"unknown check {name!r}")
        params = {k: v for k, v in item.items() if k != "name"}
        out.append(CheckSpec(name, params, p))
    return out


def _parse_sweep(value, path, functions):
    value = _mapping(value, path, {"axis", "values", "function"})
    axis = value.get("axis")
    if axis not in SWEEP_AXES:
        raise ConfigInvalid(f"{path}.axis", f"expected one of {', '.join(SWEEP_AXES)}")
    values = value.get("values")
    if not isinstance(values, list) or not values:
        raise ConfigInvalid(f"{path}.values", "expected a nonempty list")
    integer = axis in ("n_max", "K")
    values = tuple(_number(v, f"{path}.values[{i}]", positive=axis != "K", integer=integer)
                   for i, v in enumerate(values))
    fname = value.get("function", "g")
    if fname not in functions:
        raise ConfigInvalid(f"{path}.function", f"unknown function {fname!r}")
    return SweepSpec(axis, values, fname)


def parse_config(raw: dict, known_checks=None) -> ExperimentConfig:
    if known_checks is None:
        from .checks import REGISTRY
        known_checks = set(REGISTRY)
    raw = _mapping(raw, "$", _TOP_KEYS)
    if raw.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigInvalid("$.schema_version", f"unsupported (expected {SCHEMA_VERSION})")
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        raise ConfigInvalid("$.name", "required nonempty string")
    seed = _number(raw.get("seed", 0), "$.seed", integer=True)
    try:
        truncation = _parse_truncation(raw.get("truncation", {}), "$.truncation")
    except ValueError as exc:
        raise ConfigInvalid("$.truncation", str(exc)) from None
    polynomial = _parse_polynomial(raw.get("polynomial", {}), "$.polynomial")
    functions = {}
    fvalue = _mapping(raw.get("functions", {}), "$.functions")
    for fname, bumps in fvalue.items():
        p = f"$.functions.{fname}"
        if not isinstance(bumps, list):
            raise ConfigInvalid(p, "expected a list of bumps")
        functions[fname] = tuple(_parse_bump(b, f"{p}[{i}]", truncation.box_length)
                                 for i, b in enumerate(bumps))
    stepper = _parse_stepper(raw.get("stepper", {}), "$.stepper")
    checks = _parse_checks(raw.get("checks", []), "$.checks", known_checks)
    for spec in checks:
        for key, ref in spec.params.items():
            if key in ("f", "g", "h") and ref not in functions:
                raise ConfigInvalid(f"{spec.path}.{key}", f"unknown function {ref!r}")
    sweep = None
    if raw.get("sweep") is not None:
        sweep = _parse_sweep(raw["sweep"], "$.sweep", functions)
    output = _mapping(raw.get("output", {}), "$.output", {"dir", "dump"})
    out_dir = output.get("dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigInvalid("$.output.dir", "expected a string")
    dump = output.get("dump", [])
    if not isinstance(dump, list):
        raise ConfigInvalid("$.output.dump", "expected a list of function names")
    for i, fname in enumerate(dump):
        if fname not in functions:
            raise ConfigInvalid(f"$.output.dump[{i}]", f"unknown function {fname!r}")
    workers = _number(raw.get("workers", 1), "$.workers", positive=True, integer=True)
    return ExperimentConfig(name, seed, truncation, polynomial, functions, stepper, checks,
                            sweep, out_dir, tuple(dump), workers, copy.deepcopy(raw))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigInvalid("$", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid("$", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_config(raw)
