"""Synthetic datasets: clean trajectories, additive noise, CSV files."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from bcdprox.discretize import TimeGrid, TimeSeries, rk_integrate
from bcdprox.errors import ContractError
from bcdprox.models import benchmark_registry, default_grid_params
from bcdprox.rng import stream

NOISE_KINDS = ("gaussian", "laplacian")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "gaussian"
    variance: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ContractError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if not (np.isfinite(self.variance) and self.variance >= 0):
            raise ContractError("noise variance must be finite and nonnegative")

    @property
    def laplace_scale(self):
        # variance of Laplace(0, b) is 2 b^2
        return float(np.sqrt(self.variance / 2.0))

    def sample(self, shape, replicate=0):
        rng = stream(self.seed, replicate, "observation_noise")
        if self.kind == "gaussian":
            return np.sqrt(self.variance) * rng.standard_normal(shape)
        return rng.laplace(0.0, self.laplace_scale, size=shape)


@dataclass(frozen=True)
class Dataset:
    model_name: str
    grid: TimeGrid
    clean: TimeSeries
    observed: TimeSeries
    noise: np.ndarray
    theta_true: np.ndarray
    noise_spec: NoiseSpec
    replicate: int = 0


@lru_cache(maxsize=32)
def _clean_cached(name, theta_key, x1_key, grid_key):
    b = benchmark_registry(name)
    grid = TimeGrid.uniform(*grid_key)
    return rk_integrate(b.model, np.array(theta_key), np.array(x1_key), grid)


def clean_trajectory(name, grid_params=None, theta_true=None, seed=0):
    """Reference trajectory, its grid, true parameters and model (cached per process).

    ``seed`` selects the random initial state of models that have one.
    """
    b = benchmark_registry(name, seed=seed)
    grid_params = tuple(float(v) for v in (grid_params or default_grid_params(name)))
    theta = b.theta if theta_true is None else np.asarray(theta_true, dtype=float)
    if theta.shape != (b.model.p,):
        raise ContractError(f"{name}: theta_true must have {b.model.p} entries")
    X = _clean_cached(name, tuple(theta.tolist()), tuple(b.x1.tolist()), grid_params)
    return X, theta, b.model


def generate_dataset(name, grid_params=None, theta_true=None, noise=None, replicate=0):
    """Clean states from the reference integrator plus i.i.d. noise.

    The noise of replicate ``r`` comes from its own stream keyed by
    ``(noise.seed, r)``.
    """
    noise = noise or NoiseSpec()
    X, theta, _ = clean_trajectory(name, grid_params, theta_true, seed=noise.seed)
    Z = noise.sample(X.values.shape, replicate) if noise.variance > 0 else np.zeros(X.values.shape)
    Y = TimeSeries(X.grid, X.values + Z)
    return Dataset(name, X.grid, X, Y, Z, theta.copy(), noise, replicate)


def perturb_parameters(theta_true, sigma2, seed, replicate=0):
    """``theta_true + N(0, sigma2 I)`` from the stream keyed by ``(seed, replicate)``."""
    if not sigma2 >= 0:
        raise ContractError("sigma2 must be nonnegative")
    theta_true = np.asarray(theta_true, dtype=float)
    rng = stream(seed, replicate, "theta_init")
    return theta_true + np.sqrt(sigma2) * rng.standard_normal(theta_true.shape)


# --- CSV --------------------------------------------------------------------

def fmt(v):
    """Shortest text that reads back to the same double (17 significant digits)."""
    return format(float(v), ".17g")


def write_series_csv(path, series, prefix):
    """Write ``t,<prefix>0,...`` with one row per time point, LF line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"{prefix}{k}" for k in range(series.d)])
    for t, col in zip(series.grid.times, series.values.T):
        w.writerow([fmt(t)] + [fmt(v) for v in col])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def read_series_csv(path):
    """Inverse of :func:`write_series_csv`; returns ``(TimeSeries, prefix)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "t":
        raise ContractError(f"{path}: expected a header starting with 't'")
    header = rows[0][1:]
    prefix = header[0].rstrip("0123456789") if header else ""
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    return TimeSeries(TimeGrid(data[:, 0]), data[:, 1:].T), prefix


def write_dataset(ds, directory, stem=None):
    """Observed (``t,y..``) and clean (``t,x..``) CSV files; returns their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = stem or f"rep{ds.replicate}"
    obs = directory / f"{stem}_observed.csv"
    clean = directory / f"{stem}_clean.csv"
    write_series_csv(obs, ds.observed, "y")
    write_series_csv(clean, ds.clean, "x")
    return obs, clean


def read_dataset(directory, stem):
    """``(observed, clean)`` series written by :func:`write_dataset`."""
    directory = Path(directory)
    obs, _ = read_series_csv(directory / f"{stem}_observed.csv")
    clean, _ = read_series_csv(directory / f"{stem}_clean.csv")
    return obs, clean
