"""Replicated experiments, parameter sweeps and their CSV outputs."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from bcdprox.baselines import ekf_run, shooting_lsq
from bcdprox.discretize import forward_predict
from bcdprox.errors import ConditioningError, ContractError, DivergedError, NumericDomainError
from bcdprox.harness.data import fmt, generate_dataset, perturb_parameters, write_dataset
from bcdprox.harness.metrics import estimation_error, parameter_error, prediction_error
from bcdprox.models import make_model
from bcdprox.objective import FidelityProblem
from bcdprox.solver import SolverConfig, bcd_prox, bcd_prox_split

log = logging.getLogger(__name__)

FAILED = ("diverged", "error")


@dataclass
class RunRow:
    replicate: int
    method: str
    lam: float
    order: int
    pred_error: float
    est_error: float
    param_err: np.ndarray
    iters: int
    seconds: float
    status: str
    input_digest: str = ""  # hash of (Y, theta0) handed to the method
    theta: Optional[np.ndarray] = None
    trace: object = None

    @property
    def failed(self):
        return self.status.split(":")[0] in FAILED


@dataclass
class RunResult:
    rows: list = field(default_factory=list)

    def extend(self, other):
        self.rows.extend(other.rows)

    def select(self, method=None, lam=None):
        return [r for r in self.rows
                if (method is None or r.method == method) and (lam is None or r.lam == lam)]

    @property
    def all_failed(self):
        return bool(self.rows) and all(r.failed for r in self.rows)

    def to_csv(self):
        p = max((len(r.param_err) for r in self.rows), default=0)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replicate", "method", "lambda", "order", "pred_error", "est_error"]
                   + [f"param_err_{k}" for k in range(p)] + ["iters", "seconds", "status"])
        for r in self.rows:
            w.writerow([r.replicate, r.method, fmt(r.lam), r.order, fmt(r.pred_error), fmt(r.est_error)]
                       + [fmt(v) for v in r.param_err] + [r.iters, fmt(r.seconds), r.status])
        return buf.getvalue()


def input_digest(Y, theta0):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(Y, dtype=float).tobytes())
    h.update(np.ascontiguousarray(theta0, dtype=float).tobytes())
    return h.hexdigest()


def trace_csv(trace):
    p = len(trace.theta[0]) if trace.theta else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iter", "E"] + [f"theta_{k}" for k in range(p)] + ["pred_error"])
    for n, (E, th, pe) in enumerate(zip(trace.E, trace.theta, trace.pred_error)):
        w.writerow([n, fmt(E)] + [fmt(v) for v in th] + ["" if pe is None else fmt(pe)])
    return buf.getvalue()


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")


def run_method(method, ds, theta0, lam, order, clock=time.perf_counter):
    """Run one estimator on one dataset; failures become a row status, never an exception."""
    model = make_model(ds.model_name)
    X = ds.clean.values
    p = model.p
    digest = input_digest(ds.observed.values, theta0)
    start = clock()
    inf_err = np.full(p, np.inf)
    try:
        if method in ("bcdprox", "bcdprox_split"):
            problem = FidelityProblem(model, ds.grid, order)
            schedule = "two-block" if method == "bcdprox" else "three-block-split"
            solve = bcd_prox if method == "bcdprox" else bcd_prox_split
            res = solve(problem, ds.observed, theta0, SolverConfig(lam=lam, m=order, schedule=schedule),
                        truth=X)
            pe = prediction_error(X, res.X_pred)
            status = "diverged" if res.diverged else res.trace.termination
            row = RunRow(ds.replicate, method, lam, order, pe, estimation_error(X, res.X_est),
                         parameter_error(ds.theta_true, res.theta), res.iterations, 0.0, status,
                         digest, res.theta, res.trace)
        elif method == "ekf":
            res = ekf_run(model, ds.observed, theta0)
            try:
                Xh = forward_predict(model, res.theta, res.X_est.values[:, 0], ds.grid, order)
            except DivergedError:
                Xh = None
            row = RunRow(ds.replicate, method, lam, order, prediction_error(X, Xh),
                         estimation_error(X, res.X_est), parameter_error(ds.theta_true, res.theta),
                         len(res.steps), 0.0, "ok", digest, res.theta)
        elif method == "lsq":
            res = shooting_lsq(model, ds.observed, theta0, m=order)
            status = "diverged" if res.failed else "ok"
            row = RunRow(ds.replicate, method, lam, order, prediction_error(X, res.X_pred),
                         estimation_error(X, res.X_pred), parameter_error(ds.theta_true, res.theta),
                         res.nit, 0.0, status, digest, res.theta)
        else:
            raise ContractError(f"unknown method {method!r}")
    except DivergedError:
        row = RunRow(ds.replicate, method, lam, order, np.inf, np.inf, inf_err, 0, 0.0, "diverged", digest)
    except (NumericDomainError, ConditioningError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.warning("%s failed on replicate %d: %s", method, ds.replicate, exc)
        row = RunRow(ds.replicate, method, lam, order, np.inf, np.inf, inf_err, 0, 0.0,
                     f"error:{type(exc).__name__}", digest)
    row.seconds = float(clock() - start)
    return row


def _inputs(config, r):
    ds = generate_dataset(config.model, config.grid_params, config.theta_true, config.noise, replicate=r)
    theta0 = perturb_parameters(ds.theta_true, config.theta_sigma2, config.theta_seed, replicate=r)
    return ds, theta0


def run_experiment(config, lambdas=None, write=True, clock: Callable = time.perf_counter):
    """Every method on every replicate (and every ``lambdas`` value, default ``[config.lam]``).

    All methods and sweep points of a replicate share the same observations
    and initial parameters. Rows are ordered by (replicate, lambda, method).
    """
    lambdas = [config.lam] if lambdas is None else [float(v) for v in lambdas]
    result = RunResult()
    out = Path(config.out_dir)
    for r in range(config.replicates):
        ds, theta0 = _inputs(config, r)
        if write:
            write_dataset(ds, out / "data")
        for lam in lambdas:
            for method in config.methods:
                # lambda only affects the proximal solvers; baselines run once per replicate
                if method in ("ekf", "lsq") and lam != lambdas[0]:
                    continue
                row = run_method(method, ds, theta0, lam, config.order, clock)
                result.rows.append(row)
                if write and row.trace is not None:
                    _write(out / "traces" / f"rep{r}_{method}_lambda{fmt(lam)}.csv", trace_csv(row.trace))
    if write:
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "config.json", json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
        _write(out / "results.csv", result.to_csv())
    return result


def generate_all(config):
    """Write the datasets of every replicate; returns the list of datasets."""
    out = Path(config.out_dir) / "data"
    datasets = []
    for r in range(config.replicates):
        ds, _ = _inputs(config, r)
        write_dataset(ds, out)
        datasets.append(ds)
    return datasets


def sweep_lambda(config, lambdas, write=True, clock=time.perf_counter):
    return run_experiment(config, lambdas=lambdas, write=write, clock=clock)


def sweep_axis(config, axis, values, write=True, clock=time.perf_counter):
    """Re-run the experiment for each value of ``axis`` (``noise_variance`` or ``theta_sigma2``).

    Each point writes into its own subdirectory; a combined ``sweep.csv`` adds
    the swept value as the first column.
    """
    base = Path(config.out_dir)
    combined = []
    result = RunResult()
    for v in values:
        v = float(v)
        sub = str(base / f"{axis}={fmt(v)}")
        if axis == "noise_variance":
            cfg = replace(config, noise=replace(config.noise, variance=v), out_dir=sub)
        elif axis == "theta_sigma2":
            cfg = replace(config, theta_sigma2=v, out_dir=sub)
        else:
            raise ContractError(f"unknown sweep axis {axis!r}")
        res = run_experiment(cfg, write=write, clock=clock)
        lines = res.to_csv().splitlines()
        if not combined:
            combined.append(f"{axis},{lines[0]}")
        combined.extend(f"{fmt(v)},{line}" for line in lines[1:])
        result.extend(res)
    if write:
        _write(base / "sweep.csv", "\n".join(combined) + "\n")
    return result


def summarize(result):
    """Per (method, lambda) means of the error columns, as printable lines."""
    lines = []
    keys = sorted({(r.method, r.lam) for r in result.rows})
    for method, lam in keys:
        rows = result.select(method, lam)
        pe = np.array([r.pred_error for r in rows])
        ee = np.array([r.est_error for r in rows])
        pa = np.mean([r.param_err for r in rows], axis=0)
        nfail = sum(r.failed for r in rows)
        lines.append(f"{method:14s} lambda={fmt(lam):>6s} pred_error={np.mean(pe):.4g} "
                     f"est_error={np.mean(ee):.4g} param_err={np.array2string(pa, precision=4)} "
                     f"failed={nfail}/{len(rows)}")
    return lines
