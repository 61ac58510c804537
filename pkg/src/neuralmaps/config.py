"""Run configuration: YAML files with command defaults and ``--set`` overrides.

A config is a nested mapping. Every command starts from ``defaults(command)``;
the file and then each ``key.path=value`` override are merged on top. Keys
that do not exist in the defaults are rejected, except inside surface specs
(free-form by design, validated when the surface is built).
"""

from __future__ import annotations

import copy

import yaml

from .errors import ConfigError

COMMANDS = ("overfit", "parameterize", "map", "collection", "eval")

COMMON = {
    "seed": 0,
    "domain": "square",
    "output_dir": "neuralmaps_out",
    "energy": "iso",
    "weights": {"normal": 0.01, "boundary": 1e6, "injectivity": 1e2, "keypoint": 1e3, "eps": 0.01},
    "optimizer": {
        "lr": 1e-4,
        "t0": 1000,
        "t_mult": 2.0,
        "eta_min": 1e-6,
        "momentum": 0.9,
        "alpha": 0.99,
        "bias_correction": True,
    },
    "train": {
        "max_steps": 10000,
        "grad_threshold": 0.1,
        "ema_decay": 0.99,
        "ema_warmup": 100,
        "batch_size": 4096,
        "boundary_batch": 4096,
        "sample_count": 500000,
        "eval_count": 4096,
        "eval_every": 0,
        "checkpoint_every": 0,
        "divergence_factor": 1000.0,
        "injectivity": True,
    },
}

SURFACE_ARCH = {"depth": 10, "width": 256, "residual": True, "activation": "softplus", "final_scale": 1.0,
                "input_skip": False}
WARP_ARCH = {"depth": 4, "width": 128, "residual": False, "activation": "softplus", "final_scale": 1e-2,
             "input_skip": True}

SPECIFIC = {
    "overfit": {"mesh": None, "arch": SURFACE_ARCH},
    "parameterize": {"source": None, "arch": WARP_ARCH},
    "map": {"source": None, "target": None, "keypoints": None, "fixed_corners": True, "rotation": "auto",
            "arch": WARP_ARCH},
    "collection": {"surfaces": None, "keypoints": None, "fixed_corners": True, "arch": WARP_ARCH},
    "eval": {"report": None, "output": None},
}

# values that are free-form trees (surface specs, lists of specs)
OPAQUE = {"mesh", "source", "target", "surfaces", "keypoints", "report", "output"}


def defaults(command):
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    base = {} if command == "eval" else copy.deepcopy(COMMON)
    if command == "eval":
        base["seed"] = None
    base.update(copy.deepcopy(SPECIFIC[command]))
    return base


def _merge(base, update, path=""):
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key not in OPAQUE:
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be a mapping")
            _merge(base[key], value, where + ".")
        else:
            base[key] = value
    return base


def parse_override(text):
    """``a.b.c=value`` into a nested dict; the value is parsed as YAML."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {text!r}: {exc}") from exc
    out = value
    for p in reversed(parts):
        out = {p: out}
    return out


def load_text(text, source="<config>"):
    try:
        data = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: not valid YAML ({exc})") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    return data


def resolve(command, data=None, overrides=(), seed=None):
    """Defaults, then the file contents, then overrides, then ``--seed``."""
    cfg = defaults(command)
    _merge(cfg, data or {})
    for item in overrides:
        _merge(cfg, parse_override(item) if isinstance(item, str) else item)
    if seed is not None:
        cfg["seed"] = int(seed)
    _validate(command, cfg)
    return cfg


def _require(cfg, key, command):
    if cfg.get(key) in (None, "", []):
        raise ConfigError(f"{command}: config key {key!r} is required")


def _validate(command, cfg):
    if command == "eval":
        _require(cfg, "report", command)
        return
    if cfg["energy"] not in ("iso", "conformal"):
        raise ConfigError(f"energy must be 'iso' or 'conformal', got {cfg['energy']!r}")
    if cfg["domain"] not in ("square", "disk"):
        raise ConfigError(f"domain must be 'square' or 'disk', got {cfg['domain']!r}")
    if command == "overfit":
        _require(cfg, "mesh", command)
    elif command == "parameterize":
        _require(cfg, "source", command)
    elif command == "map":
        _require(cfg, "source", command)
        _require(cfg, "target", command)
        if cfg["rotation"] not in ("auto", "none"):
            raise ConfigError("rotation must be 'auto' or 'none'")
    elif command == "collection":
        _require(cfg, "surfaces", command)
        if not isinstance(cfg["surfaces"], list) or len(cfg["surfaces"]) < 2:
            raise ConfigError("collection: 'surfaces' must list at least two surfaces")
        kp = cfg["keypoints"]
        if kp is not None and (not isinstance(kp, list) or len(kp) != len(cfg["surfaces"])):
            raise ConfigError("collection: 'keypoints' must list one file per surface")
    for section in ("weights", "optimizer", "train"):
        for key, value in cfg[section].items():
            if isinstance(COMMON[section][key], bool):
                if not isinstance(value, bool):
                    raise ConfigError(f"{section}.{key} must be true or false")
            else:
                cfg[section][key] = _number(value, f"{section}.{key}")


def _number(value, where):
    # YAML 1.1 reads 1e-4 (no dot) as a string
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            pass
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    return value
