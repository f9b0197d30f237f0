"""Run-configuration parsing and CSV/JSON output helpers."""
from __future__ import annotations

import configparser
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    """Malformed or unknown configuration entry."""


def fmt(x):
    """Float with 17 significant digits (round-trip exact); ints and strings unchanged."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan; keep them visible as strings
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# configuration


def _pos_float(s):
    v = float(s)
    if not (math.isfinite(v) and v > 0):
        raise ValueError("must be positive")
    return v


def _nonneg_float(s):
    v = float(s)
    if not (math.isfinite(v) and v >= 0):
        raise ValueError("must be nonnegative")
    return v


def _pos_int(s):
    v = int(s)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _dt(s):
    """A float or a fraction like 1/256."""
    if "/" in s:
        num, den = s.split("/", 1)
        return _pos_float(num) / _pos_float(den)
    return _pos_float(s)


def _eps_list(s):
    vals = [_pos_float(v) for v in s.split(",") if v.strip()]
    if not vals:
        raise ValueError("empty list")
    return vals


def _choice(*options):
    def parse(s):
        if s not in options:
            raise ValueError(f"must be one of {options}")
        return s
    return parse


RUN_KEYS = {
    "nu": _pos_float,
    "eps": _eps_list,
    "N": _pos_int,
    "L": _pos_float,
    "T": _pos_float,
    "dt": _dt,
    "picard_tol": _pos_float,
    "picard_max": _pos_int,
    "A_kind": _choice("zero", "bump"),
    "A_radius": _pos_float,
    "A_amplitude": _nonneg_float,
    "u0_kind": _choice("zero", "shear", "taylor_green", "compact_swirl", "random"),
    "seed": int,
    "out_dir": str,
}

# extra keys understood by the verification commands only
CHECK_KEYS = {
    "volterra-demo": {"M": _pos_int},
    "oseen-verify": {"y_max": _pos_float, "scan_n": _pos_int},
    "mollifier-verify": {"n_fields": _pos_int},
}

RUN_DEFAULTS = {
    "nu": 0.1,
    "eps": None,
    "N": 32,
    "L": 2 * math.pi,
    "T": 0.5,
    "dt": 1.0 / 256,
    "picard_tol": 1e-12,
    "picard_max": 50,
    "A_kind": "zero",
    "A_radius": None,
    "A_amplitude": 0.0,
    "u0_kind": None,
    "seed": 0,
    "out_dir": None,
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    given: set = field(default_factory=set)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v


def parse_config(text, allowed=None):
    """Parse ``key = value`` lines ('#' comments); unknown keys raise ConfigError."""
    allowed = dict(RUN_KEYS if allowed is None else allowed)
    cp = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#",),
                                   inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str  # keys are case sensitive (N vs nu)
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values, given = {}, set()
    for key, raw in cp["run"].items():
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r}")
        raw = raw.strip()
        try:
            values[key] = allowed[key](raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None
        given.add(key)
    return RunConfig(values, given)


def load_config(path, allowed=None):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, allowed)


def with_defaults(cfg, defaults=None):
    merged = dict(RUN_DEFAULTS if defaults is None else defaults)
    merged.update(cfg.values)
    return RunConfig(merged, set(cfg.given))
