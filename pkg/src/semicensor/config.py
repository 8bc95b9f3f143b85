"""JSON experiment configs: defaults, schema validation and object construction."""

import copy
import csv
import json
import math

import jsonschema

from .exceptions import ValidationError
from .ground import GroundModel
from .inference import IntervalSet, ModelSpec
from .kernels import HarmonicExponential, kernel_from_dict
from .semimarkov import RenewalDensity, validate_renewal_density

__all__ = ["DEFAULTS", "SCHEMA", "load_config", "merge", "read_interval_csv", "build_kernel", "build_renewal", "build_ground"]

TWO_PI = 2 * math.pi

_NUMBER = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 0}

_KERNEL = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["harmonic", "weibull", "gamma"]},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "b": {"type": "number", "minimum": 1},
        "c": _NUMBER,
        "shape": {"type": "number", "exclusiveMinimum": 0},
        "rate": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}

_RENEWAL = {
    "type": "object",
    "required": ["breaks", "levels"],
    "properties": {
        "breaks": {"type": "array", "items": {"type": ["number", "string"]}, "minItems": 2},
        "levels": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
    },
    "additionalProperties": False,
}

_GROUND = {
    "type": "object",
    "required": ["window", "beta"],
    "properties": {
        "window": {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2},
        "beta": {
            "oneOf": [
                {"type": "number", "minimum": 0},
                {
                    "type": "object",
                    "required": ["breaks", "values"],
                    "properties": {
                        "breaks": {"type": "array", "items": _NUMBER, "minItems": 2},
                        "values": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                    },
                    "additionalProperties": False,
                },
            ]
        },
        "log_gamma": _NUMBER,
        "r": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

_CHAIN = {
    "type": "object",
    "properties": {"n_steps": _POS_INT, "burn_in": _POS_INT, "trace_every": {"type": "integer", "minimum": 1}},
    "additionalProperties": False,
}

_FIT = {
    "type": "object",
    "properties": {
        "family": {"enum": ["homogeneous", "harmonic", "weibull", "gamma"]},
        "breaks": {"type": "array", "items": {"type": ["number", "string"]}, "minItems": 2},
        "fixed": {"type": "object", "additionalProperties": _NUMBER},
        "start": {"type": "object"},
        "max_iter": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

_PANEL = {
    "type": "object",
    "required": ["kernel", "renewal"],
    "properties": {"label": {"type": "string"}, "kernel": _KERNEL, "renewal": _RENEWAL},
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "required": ["experiment", "seed"],
    "properties": {
        "experiment": {"enum": ["misspec", "renewal-panels", "peak-conditional", "simulate", "fit", "condition"]},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "t0": _NUMBER,
        "kernel": _KERNEL,
        "renewal": _RENEWAL,
        "ground": _GROUND,
        "chain": _CHAIN,
        "fit": _FIT,
        "x": _NUMBER,
        "n_samples": {"type": "integer", "minimum": 1},
        "bins": {"type": "integer", "minimum": 1},
        "eval_time": _NUMBER,
        "length_grid": {"type": "array", "items": _NUMBER, "minItems": 3, "maxItems": 3},
        "panels": {"type": "array", "items": _PANEL, "minItems": 1},
        "data": {"type": "array", "items": {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2}},
        "log_gammas": {"type": "object", "additionalProperties": _NUMBER},
        "histogram_range": {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2},
    },
    "additionalProperties": False,
}

_MISSPEC_RENEWAL = {"breaks": [-0.2, 1.0], "levels": [0.6]}

DEFAULTS = {
    "misspec": {
        "seed": 0,
        "t0": -0.2,
        "kernel": {"family": "harmonic", "alpha": 1.0, "b": 1.6, "c": TWO_PI},
        "renewal": _MISSPEC_RENEWAL,
        "ground": {"window": [0.0, 1.0], "beta": 400.0, "log_gamma": 0.0, "r": 0.0},
        "fit": {"family": "weibull", "breaks": [-0.2, 1.0], "max_iter": 10000},
        "eval_time": 0.6,
        "length_grid": [0.0, 3.0, 301],
    },
    "renewal-panels": {
        "seed": 0,
        "t0": -0.2,
        "x": 1.0,
        "n_samples": 200000,
        "bins": 100,
        "panels": [
            {"label": "a", "kernel": {"family": "harmonic", "alpha": 1.6, "b": 1.3, "c": 0.0},
             "renewal": {"breaks": [-0.2, 1.0], "levels": [0.4]}},
            {"label": "b", "kernel": {"family": "harmonic", "alpha": 1.6, "b": 1.3, "c": 0.0},
             "renewal": {"breaks": [-0.2, 0.4, 1.0], "levels": [0.4, 0.1]}},
            {"label": "c", "kernel": {"family": "harmonic", "alpha": 1.6, "b": 1.3, "c": TWO_PI},
             "renewal": {"breaks": [-0.2, 1.0], "levels": [0.4]}},
            {"label": "d", "kernel": {"family": "harmonic", "alpha": 1.6, "b": 1.3, "c": TWO_PI},
             "renewal": {"breaks": [-0.2, 0.4, 1.0], "levels": [0.4, 0.1]}},
        ],
    },
    "peak-conditional": {
        "seed": 0,
        "ground": {"window": [0.0, 1.0], "beta": {"breaks": [0.0, 0.81, 0.85, 1.0], "values": [3.0, 5.0, 3.0]}, "r": 0.1},
        "log_gammas": {"regular": -1.2, "clustered": 1.2},
        "data": [[0.45, 0.4], [0.51, 0.0], [0.58, 0.0]],
        "chain": {"n_steps": 600000, "burn_in": 100000},
        "bins": 100,
        "histogram_range": [0.45, 0.85],
    },
    "simulate": {
        "seed": 0,
        "t0": -0.2,
        "kernel": {"family": "harmonic", "alpha": 1.0, "b": 1.6, "c": TWO_PI},
        "renewal": _MISSPEC_RENEWAL,
        "ground": {"window": [0.0, 1.0], "beta": 400.0, "log_gamma": 0.0, "r": 0.0},
        "chain": {"n_steps": 200000, "burn_in": 50000},
    },
    "fit": {
        "seed": 0,
        "t0": -0.2,
        "fit": {"family": "homogeneous"},
    },
    "condition": {
        "seed": 0,
        "ground": {"window": [0.0, 1.0], "beta": 3.0, "log_gamma": 0.0, "r": 0.1},
        "chain": {"n_steps": 100000, "burn_in": 10000},
    },
}


def merge(base, override):
    """Recursive dict merge; lists and scalars in ``override`` replace those in ``base``."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(experiment, path=None, seed=None):
    """Defaults for ``experiment`` overlaid with the JSON file at ``path`` and ``seed``."""
    user = {}
    if path is not None:
        with open(path) as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(user, dict):
            raise ValidationError(f"{path}: config must be a JSON object")
        if user.get("experiment", experiment) != experiment:
            raise ValidationError(f"config is for {user['experiment']!r}, not {experiment!r}")
    cfg = merge(DEFAULTS[experiment], user)
    cfg["experiment"] = experiment
    if seed is not None:
        cfg["seed"] = int(seed)
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    """Schema check, then module-level invariants of every parameter block."""
    errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors]
        raise ValidationError("invalid config:\n  " + "\n  ".join(lines))
    blocks = [(cfg.get("kernel"), cfg.get("renewal"))]
    blocks += [(p["kernel"], p["renewal"]) for p in cfg.get("panels", [])]
    for kcfg, rcfg in blocks:
        kernel = build_kernel(kcfg) if kcfg else None
        renewal = build_renewal(rcfg) if rcfg else None
        if isinstance(kernel, HarmonicExponential) and renewal is not None:
            validate_renewal_density(renewal, kernel, strict=True)
    if "ground" in cfg:
        build_ground(cfg["ground"])
    if "fit" in cfg and cfg["fit"].get("family", "homogeneous") != "homogeneous":
        build_spec(cfg["fit"])
    chain = cfg.get("chain", {})
    if chain.get("n_steps", 1) and chain.get("burn_in", 0) >= chain.get("n_steps", 1):
        raise ValidationError("chain: burn_in must be smaller than n_steps")


def build_kernel(kcfg):
    return kernel_from_dict(kcfg)


def build_renewal(rcfg):
    return RenewalDensity.from_dict(rcfg)


def build_ground(gcfg):
    return GroundModel.from_dict(gcfg)


def build_spec(fcfg):
    return ModelSpec(fcfg["family"], tuple(float(b) for b in fcfg["breaks"]), dict(fcfg.get("fixed", {})))


def read_interval_csv(path):
    """Read marks from a CSV with columns ``a`` and ``l`` (other columns ignored).

    Errors name the offending line of the file.
    """
    atoms, starts, lengths = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}: empty file")
        try:
            ia, il = header.index("a"), header.index("l")
        except ValueError:
            raise ValidationError(f"{path}: header must contain columns 'a' and 'l'") from None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                a, l = float(row[ia]), float(row[il])
            except (IndexError, ValueError):
                raise ValidationError(f"{path}: malformed row at line {lineno}: {row!r}") from None
            if not (math.isfinite(a) and math.isfinite(l)) or l < 0:
                raise ValidationError(f"{path}: invalid mark at line {lineno}: a={a}, l={l}")
            if l == 0:
                atoms.append(a)
            else:
                starts.append(a)
                lengths.append(l)
    return IntervalSet(atoms, starts, lengths)
