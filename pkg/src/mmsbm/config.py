"""Run-configuration schema: strict validation with path-named errors.

A run config is a JSON document with sections {data, bridge, train, eval,
output}.  Unknown keys are rejected, every error names the offending path
(e.g. ``train.learning_rate: must be positive``), and defaults are filled in
before any computation starts.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import ConfigError


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _positive(path, v):
    if not _is_num(v) or v <= 0:
        raise ConfigError(f"{path}: must be a positive number")


def _non_negative(path, v):
    if not _is_num(v) or v < 0:
        raise ConfigError(f"{path}: must be a non-negative number")


def _positive_int(path, v):
    if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
        raise ConfigError(f"{path}: must be a positive integer")


def _int_ge(minv):
    def check(path, v):
        if not isinstance(v, int) or isinstance(v, bool) or v < minv:
            raise ConfigError(f"{path}: must be an integer >= {minv}")
    return check


def _number(path, v):
    if not _is_num(v):
        raise ConfigError(f"{path}: must be a number")


def _boolean(path, v):
    if not isinstance(v, bool):
        raise ConfigError(f"{path}: must be a boolean")


def _string(path, v):
    if not isinstance(v, str):
        raise ConfigError(f"{path}: must be a string")


def _enum(*options):
    def check(path, v):
        if v not in options:
            raise ConfigError(f"{path}: must be one of {sorted(options)}")
    return check


def _num_list(length=None, ascending=False, positive=False):
    def check(path, v):
        if not isinstance(v, list) or not all(_is_num(x) for x in v):
            raise ConfigError(f"{path}: must be a list of numbers")
        if length is not None and len(v) != length:
            raise ConfigError(f"{path}: must have exactly {length} entries")
        if ascending and (len(v) < 2 or any(b <= a for a, b in zip(v, v[1:]))):
            raise ConfigError(f"{path}: must be strictly ascending with >= 2 entries")
        if positive and any(x <= 0 for x in v):
            raise ConfigError(f"{path}: entries must be positive")
    return check


def _dict(path, v):
    if not isinstance(v, dict):
        raise ConfigError(f"{path}: must be an object")


def _point_list(path, v):
    if (not isinstance(v, list) or len(v) < 2
            or not all(isinstance(p, list) and p and all(_is_num(x) for x in p) for p in v)):
        raise ConfigError(f"{path}: must be a list (>= 2) of coordinate lists")
    if len({len(p) for p in v}) != 1:
        raise ConfigError(f"{path}: points must share a dimension")


# (default, checker); checker None means any JSON value
_GEN_PARAMS = {
    "lotka_volterra": {
        "rates": ([1.0, 1.0, 1.0, 1.0], _num_list(length=4, positive=True)),
        "ic": ([2.0, 0.5], _num_list(length=2, positive=True)),
        "ic_jitter": (0.1, _non_negative),
        "obs_noise": (0.01, _non_negative),
    },
    "vortex": {
        "angular_speed": (float(np.pi / 4), _number),
        "noise": (0.05, _non_negative),
        "arc": (float(2 * np.pi / 3), _positive),
        "radius": ([0.8, 1.2], _num_list(length=2, ascending=True, positive=True)),
    },
    "gaussian_mixture": {
        "spec": (None, _dict),
    },
}

SCHEMA = {
    "data": {
        "generator": (None, _enum("lotka_volterra", "vortex", "gaussian_mixture")),
        "path": (None, _string),
        "n_samples": (50, _positive_int),
        "times": (None, _num_list(ascending=True)),
        "params": ({}, _dict),
    },
    "bridge": {
        "sigma": (0.3, _positive),
        "c": (1e-6, _positive),
        "ode_steps": (10_000, _positive_int),
        "truncation_k": (None, _int_ge(1)),
        "pinned_points": (None, _point_list),
        "v0": (None, _num_list()),
        "n_paths": (20, _int_ge(0)),
        "steps_per_segment": (2000, _positive_int),
    },
    "train": {
        "sigma": (0.3, _positive),
        "batch_size": (64, _positive_int),
        "learning_rate": (1e-4, _positive),
        "outer_iterations": (10, _positive_int),
        "inner_steps": (500, _positive_int),
        "refinement_rounds": (4, _positive_int),
        "truncation_k": (None, _int_ge(1)),
        "seed": (0, _int_ge(0)),
        "width": (128, _positive_int),
        "depth": (3, _positive_int),
        "time_freqs": (8, _positive_int),
        "weight_decay": (1e-4, _non_negative),
        "ema_decay": (0.999, _non_negative),
        "steps_per_segment": (100, _positive_int),
        "grid_h": (1e-3, _positive),
        "anchored_refresh": (False, _boolean),
        "pool_cap": (1000, _positive_int),
    },
    "eval": {
        "n_paths": (1000, _positive_int),
        "steps_per_segment": (2000, _positive_int),
        "num_projections": (256, _positive_int),
        "metrics": (["w1", "w2", "swd", "mmd"], None),
        "plot": (True, _boolean),
        "ablate_values": (None, _num_list()),
        "ablate_mode": ("bridge", _enum("bridge", "retrain")),
        "ablate_n_paths": (300, _positive_int),
    },
    "output": {
        "prefix": ("", _string),
    },
}

_METRIC_NAMES = ("w1", "w2", "swd", "mmd")


def validate_config(doc: dict) -> dict:
    """Check ``doc`` against the schema and return it with defaults filled."""
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be an object")
    for section in doc:
        if section not in SCHEMA:
            raise ConfigError(f"{section}: unknown section")
    out = {}
    for section, fields in SCHEMA.items():
        given = doc.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"{section}: must be an object")
        for key in given:
            if key not in fields:
                raise ConfigError(f"{section}.{key}: unknown key")
        sec = {}
        for key, (default, check) in fields.items():
            val = given.get(key, default)
            if val is not None and check is not None:
                check(f"{section}.{key}", val)
            sec[key] = val
        out[section] = sec

    mets = out["eval"]["metrics"]
    if (not isinstance(mets, list) or not mets
            or any(m not in _METRIC_NAMES for m in mets)):
        raise ConfigError(f"eval.metrics: must be a non-empty subset of {list(_METRIC_NAMES)}")

    gen = out["data"]["generator"]
    params = out["data"]["params"]
    if gen is None:
        if params:
            raise ConfigError("data.params: given without data.generator")
    else:
        allowed = _GEN_PARAMS[gen]
        for key in params:
            if key not in allowed:
                raise ConfigError(f"data.params.{key}: unknown key for generator {gen!r}")
        filled = {}
        for key, (default, check) in allowed.items():
            val = params.get(key, default)
            if val is not None and check is not None:
                check(f"data.params.{key}", val)
            filled[key] = val
        out["data"]["params"] = filled
        if gen == "gaussian_mixture" and filled["spec"] is None:
            raise ConfigError("data.params.spec: required for the gaussian_mixture generator")
    return out


def load_config(path) -> dict:
    """Read and validate a JSON run configuration from disk."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})")
    return validate_config(doc)
