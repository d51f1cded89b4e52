"""Experiment configuration read from JSON."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from bcdprox.errors import ConfigError, ContractError
from bcdprox.harness.data import NoiseSpec
from bcdprox.models import BENCHMARKS, make_model

METHODS = ("bcdprox", "bcdprox_split", "ekf", "lsq")

_KEYS = {"model", "t0", "t_end", "dt", "noise", "lambda", "order", "theta_init",
         "theta_true", "replicates", "methods", "out_dir"}
_OPTIONAL = {"theta_true"}
_NOISE_KEYS = {"kind", "variance", "seed"}
_THETA_INIT_KEYS = {"sigma2", "seed"}


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    t0: float
    t_end: float
    dt: float
    noise: NoiseSpec
    lam: float
    order: int
    theta_sigma2: float
    theta_seed: int
    replicates: int
    methods: tuple
    out_dir: str
    theta_true: Optional[tuple] = None

    @property
    def grid_params(self):
        return (self.t0, self.t_end, self.dt)

    def with_seed(self, seed):
        """Same experiment with both the noise and the initialization seeds set to ``seed``."""
        return replace(self, noise=replace(self.noise, seed=int(seed)), theta_seed=int(seed))

    def to_dict(self):
        d = {
            "model": self.model, "t0": self.t0, "t_end": self.t_end, "dt": self.dt,
            "noise": {"kind": self.noise.kind, "variance": self.noise.variance, "seed": self.noise.seed},
            "lambda": self.lam, "order": self.order,
            "theta_init": {"sigma2": self.theta_sigma2, "seed": self.theta_seed},
            "replicates": self.replicates, "methods": list(self.methods), "out_dir": self.out_dir,
        }
        if self.theta_true is not None:
            d["theta_true"] = list(self.theta_true)
        return d


def _exact_keys(obj, required, optional, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    keys = set(obj)
    unknown = keys - required - optional
    missing = required - keys
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")


def _number(v, name, lo=None, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{name} must be a finite number")
    if positive and not v > 0:
        raise ConfigError(f"{name} must be positive")
    if lo is not None and v < lo:
        raise ConfigError(f"{name} must be >= {lo}")
    return float(v)


def _integer(v, name, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{name} must be an integer")
    if lo is not None and v < lo:
        raise ConfigError(f"{name} must be >= {lo}")
    return v


def config_from_dict(d):
    _exact_keys(d, _KEYS - _OPTIONAL, _OPTIONAL, "config")
    if d["model"] not in BENCHMARKS:
        raise ConfigError(f"model must be one of {BENCHMARKS}, got {d['model']!r}")
    t0 = _number(d["t0"], "t0")
    t_end = _number(d["t_end"], "t_end")
    dt = _number(d["dt"], "dt", positive=True)
    if round((t_end - t0) / dt) < 2:
        raise ConfigError("the time grid needs at least two points")
    _exact_keys(d["noise"], _NOISE_KEYS, set(), "noise")
    try:
        noise = NoiseSpec(d["noise"]["kind"], _number(d["noise"]["variance"], "noise.variance", lo=0),
                          _integer(d["noise"]["seed"], "noise.seed", lo=0))
    except ContractError as exc:
        raise ConfigError(str(exc)) from None
    _exact_keys(d["theta_init"], _THETA_INIT_KEYS, set(), "theta_init")
    methods = d["methods"]
    if not isinstance(methods, list) or not methods:
        raise ConfigError("methods must be a non-empty array")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; expected a subset of {METHODS}")
    if len(set(methods)) != len(methods):
        raise ConfigError("methods must not repeat")
    order = _integer(d["order"], "order", lo=1)
    if order > 5:
        raise ConfigError("order must be between 1 and 5")
    theta_true = d.get("theta_true")
    if theta_true is not None:
        if not isinstance(theta_true, list):
            raise ConfigError("theta_true must be an array")
        theta_true = tuple(_number(v, "theta_true entry") for v in theta_true)
        if len(theta_true) != make_model(d["model"]).p:
            raise ConfigError(f"theta_true must have {make_model(d['model']).p} entries")
    if not isinstance(d["out_dir"], str) or not d["out_dir"]:
        raise ConfigError("out_dir must be a non-empty string")
    return ExperimentConfig(
        model=d["model"], t0=t0, t_end=t_end, dt=dt, noise=noise,
        lam=_number(d["lambda"], "lambda", lo=0), order=order,
        theta_sigma2=_number(d["theta_init"]["sigma2"], "theta_init.sigma2", lo=0),
        theta_seed=_integer(d["theta_init"]["seed"], "theta_init.seed", lo=0),
        replicates=_integer(d["replicates"], "replicates", lo=1),
        methods=tuple(methods), out_dir=d["out_dir"], theta_true=theta_true,
    )


def load_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(d)
