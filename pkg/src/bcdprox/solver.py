"""Block coordinate descent with a proximal state penalty.

Each outer iteration ``n`` fixes the anchor ``A = X^(n-1)`` and minimizes

    F_n(X, theta) = E(X, theta) + lam * ||X - A||^2

first over ``theta`` and then over the states (either all at once, or the
second half followed by the first half). The loop starts from the noisy
observations and, once converged, rebuilds a trajectory by forward
prediction from the estimated parameters and first estimated state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from bcdprox.discretize import TimeSeries, forward_predict
from bcdprox.errors import ContractError, DivergedError
from bcdprox.minimize import CurvatureMemory, MinimizerConfig, minimize_smooth
from bcdprox.objective import ProxAnchor, _values, fidelity, split_index

log = logging.getLogger(__name__)

SCHEDULES = ("two-block", "three-block-split")


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 1.0
    m: int = 3
    tol: float = 1e-8  # on |E(n) - E(n-1)|
    max_outer: int = 5000
    schedule: str = "two-block"
    fixed_point_tol: float = 1e-12
    theta_minimizer: MinimizerConfig = field(default_factory=MinimizerConfig)
    x_minimizer: MinimizerConfig = field(default_factory=MinimizerConfig)

    def __post_init__(self):
        if not self.lam >= 0:
            raise ContractError("lambda must be nonnegative")
        if not self.tol > 0:
            raise ContractError("outer tolerance must be positive")
        if self.max_outer < 1:
            raise ContractError("max_outer must be at least 1")
        if self.schedule not in SCHEDULES:
            raise ContractError(f"schedule must be one of {SCHEDULES}")


@dataclass
class SolverTrace:
    """Row ``n`` holds ``E(X^(n), theta^(n))``; row 0 is the starting point ``(Y, theta0)``."""

    E: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    pred_error: list = field(default_factory=list)
    termination: str = ""

    @property
    def iterations(self):
        return max(len(self.E) - 1, 0)

    def append(self, E, theta, pred_error=None):
        self.E.append(float(E))
        self.theta.append(np.array(theta, dtype=float))
        self.pred_error.append(pred_error)


@dataclass
class EstimationResult:
    theta: np.ndarray
    X_est: TimeSeries
    X_pred: Optional[TimeSeries]
    trace: SolverTrace
    diverged: bool = False

    @property
    def iterations(self):
        return self.trace.iterations


def theta_step(problem, anchor, X_prev, theta_prev, minimizer=None):
    """Minimize ``F_n(X_prev, .)`` warm-started at ``theta_prev``."""
    Xt = np.ascontiguousarray(_values(X_prev).T)
    # the proximal term is constant in theta, so only E matters
    def fun(th):
        E, _, g = problem.value_and_grads_rows(Xt, th, want_x=False)
        return E, g

    return minimize_smooth(fun, np.asarray(theta_prev, dtype=float), minimizer).x


def _prox_fun(problem, At, theta, lam, base=None, rows=None):
    # objective over time-major states; with ``rows`` only those rows of ``base`` vary
    theta = np.asarray(theta, dtype=float)
    At_rows = At if rows is None else At[rows]

    def fun(Z):
        if rows is None:
            Xt = Z
        else:
            Xt = base.copy()
            Xt[rows] = Z
        E, g, _ = problem.value_and_grads_rows(Xt, theta, want_theta=False)
        if rows is not None:
            g = g[rows]
        diff = Z - At_rows
        return E + lam * float(np.sum(diff * diff)), g + (2.0 * lam) * diff

    return fun


def _snap_to_prediction(problem, X, theta):
    """At ``lam = 0`` the forward prediction from ``X``'s first state is an exact minimizer."""
    try:
        Xh = forward_predict(problem.model, theta, X[:, 0], problem.grid, problem.m).values
    except DivergedError:
        return X
    return Xh if fidelity(problem, Xh, theta) <= fidelity(problem, X, theta) else X


def x_step(problem, anchor, X_prev, theta_new, minimizer=None, memory=None):
    """Minimize ``F_n(., theta_new)`` over all states, warm-started at ``X_prev``."""
    Xt_prev = np.array(_values(X_prev).T, dtype=float, order="C")
    At = np.ascontiguousarray(anchor.anchor.T)
    lam = anchor.lam
    Zt = minimize_smooth(_prox_fun(problem, At, theta_new, lam), Xt_prev, minimizer, memory).x
    X = np.ascontiguousarray(Zt.T)
    if lam == 0.0:
        X = _snap_to_prediction(problem, X, theta_new)
    return X


def x_block_step(problem, anchor, X_prev, theta_new, cols, minimizer=None, memory=None):
    """Minimize ``F_n`` over the state columns in ``cols`` with the others held fixed."""
    Xt_prev = np.array(_values(X_prev).T, dtype=float, order="C")
    At = np.ascontiguousarray(anchor.anchor.T)
    fun = _prox_fun(problem, At, theta_new, anchor.lam, base=Xt_prev, rows=cols)
    Zt = minimize_smooth(fun, Xt_prev[cols], minimizer, memory).x
    Xt_prev[cols] = Zt
    return np.ascontiguousarray(Xt_prev.T)


def _prediction_error(problem, theta, x1, truth):
    try:
        Xh = forward_predict(problem.model, theta, x1, problem.grid, problem.m).values
    except DivergedError:
        return float("inf")
    return float(np.sqrt(np.sum((truth - Xh) ** 2)))


def _check_inputs(problem, Y, theta0):
    Y = np.array(_values(Y), dtype=float)
    theta0 = np.array(theta0, dtype=float)
    if Y.shape != (problem.model.d, problem.T):
        raise ContractError(f"observations must be {problem.model.d} x {problem.T}, got {Y.shape}")
    if theta0.shape != (problem.model.p,):
        raise ContractError(f"theta0 must have shape ({problem.model.p},)")
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(theta0))):
        raise ContractError("observations and theta0 must be finite")
    return Y, theta0


def _solve(problem, Y, theta0, config, truth, split, callback=None):
    Y, theta = _check_inputs(problem, Y, theta0)
    if truth is not None:
        truth = _values(truth)
    cfg = config
    trace = SolverTrace()

    def pred_err(th, X):
        return None if truth is None else _prediction_error(problem, th, X[:, 0], truth)

    X = Y
    E_prev = fidelity(problem, X, theta)
    trace.append(E_prev, theta, pred_err(theta, X))
    if split:
        n_plus = split_index(problem.T)
        plus = slice(0, n_plus)
        minus = slice(n_plus, problem.T)

    # curvature pairs carried across outer iterations, one store per state block
    mem_x = CurvatureMemory(cfg.x_minimizer.history)
    mem_plus = CurvatureMemory(cfg.x_minimizer.history)
    termination = "max_outer"
    for n in range(1, cfg.max_outer + 1):
        anchor = ProxAnchor(X, cfg.lam)
        theta = theta_step(problem, anchor, X, theta, cfg.theta_minimizer)
        if split:
            X_new = x_block_step(problem, anchor, X, theta, minus, cfg.x_minimizer, mem_x)
            X_new = x_block_step(problem, anchor, X_new, theta, plus, cfg.x_minimizer, mem_plus)
            if cfg.lam == 0.0:
                X_new = _snap_to_prediction(problem, X_new, theta)
        else:
            X_new = x_step(problem, anchor, X, theta, cfg.x_minimizer, mem_x)
        E = fidelity(problem, X_new, theta)
        trace.append(E, theta, pred_err(theta, X_new))
        if callback is not None:
            callback(n, X_new, theta)
        moved = float(np.max(np.abs(X_new - X)))
        X = X_new
        if abs(E - E_prev) < cfg.tol:
            termination = "tolerance"
            break
        if moved <= cfg.fixed_point_tol:
            termination = "fixed_point_anchor"
            break
        # X can only coincide with its own forward prediction when E is tiny
        if E <= 1e-12 * (1.0 + float(np.sum(X * X))):
            try:
                Xh = forward_predict(problem.model, theta, X[:, 0], problem.grid, problem.m).values
                if float(np.max(np.abs(X - Xh))) <= cfg.fixed_point_tol:
                    termination = "fixed_point_prediction"
                    break
            except DivergedError:
                pass
        E_prev = E
    trace.termination = termination
    log.debug("solver stopped after %d iterations (%s), E=%.3e", trace.iterations, termination, trace.E[-1])

    grid = problem.grid
    try:
        X_pred = forward_predict(problem.model, theta, X[:, 0], grid, problem.m)
        diverged = False
    except DivergedError:
        X_pred, diverged = None, True
    return EstimationResult(theta, TimeSeries(grid, X), X_pred, trace, diverged)


def bcd_prox(problem, Y, theta0, config=None, truth=None, callback=None):
    """Two-block schedule: parameters, then all states.

    ``truth`` (clean states) is optional and only used to record the
    per-iteration prediction error in the trace. ``callback(n, X, theta)``,
    if given, is called after every outer iteration with read-only views.
    """
    cfg = config or SolverConfig()
    return _solve(problem, Y, theta0, cfg, truth, cfg.schedule == "three-block-split", callback)


def bcd_prox_split(problem, Y, theta0, config=None, truth=None, callback=None):
    """Three-block schedule: parameters, second half of the states, first half."""
    cfg = config or SolverConfig(schedule="three-block-split")
    return _solve(problem, Y, theta0, cfg, truth, True, callback)
