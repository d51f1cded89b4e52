"""Comparison estimators: a joint state-parameter EKF and shooting least squares.

The EKF augments the state with the parameters, ``xi = (x, theta)``, and
propagates it with an explicit Euler step while the parameters are held
constant. Only the state block is observed. Shooting least squares treats
``(x1, theta)`` as the unknowns and fits the forward multistep prediction to
the observations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from bcdprox import _kernels
from bcdprox.discretize import (
    DIVERGENCE_BOUND,
    TimeSeries,
    ab_coefficients,
    check_grid_for_order,
    forward_predict,
    scheme_table,
)
from bcdprox.errors import ConditioningError, ContractError, DivergedError, NumericDomainError
from bcdprox.minimize import MinimizerConfig, minimize_smooth
from bcdprox.objective import _values

log = logging.getLogger(__name__)


# --- extended Kalman filter ---------------------------------------------------

@dataclass(frozen=True)
class EkfConfig:
    initial_cov: float = 1000.0
    measurement_var: float = 0.1
    process_var: float = 1.0  # white-noise intensity on the states, per unit time
    param_jitter: float = 1e-8  # process noise on the parameter block
    clip_tol: float = 1e-6  # allowed clipped eigenvalue mass, relative to the trace

    def __post_init__(self):
        for name in ("initial_cov", "measurement_var", "process_var", "param_jitter", "clip_tol"):
            if not getattr(self, name) > 0:
                raise ContractError(f"EkfConfig.{name} must be positive")


@dataclass(frozen=True)
class JointState:
    """Filtered mean of ``(x, theta)`` and its covariance after one update."""

    xi: np.ndarray
    cov: np.ndarray

    def state(self, d):
        return self.xi[:d]

    def params(self, d):
        return self.xi[d:]


@dataclass
class EkfResult:
    steps: list  # JointState per observation time
    theta: np.ndarray
    X_est: TimeSeries


def psd_project(P, clip_tol=1e-6):
    """Symmetrize ``P`` and clip negative eigenvalues to zero.

    Raises :class:`ConditioningError` if the clipped eigenvalue mass exceeds
    ``clip_tol`` times the trace (or the matrix is not finite).
    """
    P = 0.5 * (P + P.T)
    if not np.all(np.isfinite(P)):
        raise ConditioningError("covariance became non-finite")
    w, V = np.linalg.eigh(P)
    if w[0] >= 0.0:
        return P
    lost = -float(np.sum(w[w < 0]))
    if lost > clip_tol * max(float(np.trace(P)), 0.0):
        raise ConditioningError(f"covariance lost positive semidefiniteness (clipped {lost:.3e})")
    w = np.clip(w, 0.0, None)
    P = (V * w) @ V.T
    return 0.5 * (P + P.T)


def _transition(model, x, theta, dt):
    d, p = model.d, model.p
    F = np.eye(d + p)
    F[:d, :d] += dt * model.state_jacobian(x, theta)
    F[:d, d:] = dt * model.param_jacobian(x, theta)
    return F


def ekf_run(model, Y, theta0, config=None, grid=None):
    """Filter the observations ``Y`` (``TimeSeries`` or ``d x T`` array with ``grid``).

    The joint mean starts at ``(y_1, theta0)`` and is updated with ``y_1``
    before the first prediction. Process noise on the states is white noise
    of intensity ``process_var`` integrated over each gap. Each later step predicts over the gap to the
    next observation time and updates with that observation.
    """
    cfg = config or EkfConfig()
    if isinstance(Y, TimeSeries):
        grid = Y.grid
    elif grid is None:
        raise ContractError("a time grid is needed when Y is a plain array")
    Yv = np.asarray(_values(Y), dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    d, p = model.d, model.p
    if Yv.shape != (d, len(grid)) or theta0.shape != (p,):
        raise ContractError("observation or parameter shape does not match the model")
    if not (np.all(np.isfinite(Yv)) and np.all(np.isfinite(theta0))):
        raise ContractError("observations and theta0 must be finite")

    n = d + p
    # state noise accumulates over the gap; the parameter block only gets a fixed jitter
    q_state = np.r_[np.ones(d), np.zeros(p)] * cfg.process_var
    q_param = np.r_[np.zeros(d), np.full(p, cfg.param_jitter)]
    R = cfg.measurement_var * np.eye(d)
    xi = np.r_[Yv[:, 0], theta0]
    P = cfg.initial_cov * np.eye(n)
    gaps = grid.gaps
    steps = []
    with np.errstate(all="ignore"):
        for i in range(len(grid)):
            if i > 0:
                x, th = xi[:d], xi[d:]
                F = _transition(model, x, th, gaps[i - 1])
                xi = np.r_[x + gaps[i - 1] * model.field(x, th), th]
                P = F @ P @ F.T
                P[np.diag_indices(n)] += q_state * gaps[i - 1] + q_param
            # update with y_i; H = [I 0]
            S = P[:d, :d] + R
            K = np.linalg.solve(S, P[:d, :]).T
            innov = Yv[:, i] - xi[:d]
            xi = xi + K @ innov
            IKH = np.eye(n)
            IKH[:, :d] -= K
            P = IKH @ P @ IKH.T + K @ R @ K.T  # Joseph form
            P = psd_project(P, cfg.clip_tol)
            if not (np.all(np.isfinite(xi)) and np.all(np.abs(xi) <= DIVERGENCE_BOUND)):
                raise DivergedError(f"EKF estimate diverged at step {i}", i)
            steps.append(JointState(xi.copy(), P))
    X_est = TimeSeries(grid, np.array([s.xi[:d] for s in steps]).T)
    return EkfResult(steps, xi[d:].copy(), X_est)


# --- shooting least squares ---------------------------------------------------

@dataclass
class ShootingResult:
    theta: np.ndarray
    x1: np.ndarray
    X_pred: Optional[TimeSeries]
    value: float
    failed: bool = False
    nit: int = 0


class ShootingObjective:
    """``sum_i ||y_i - xhat_i(theta, x1)||^2`` with ``xhat`` the order-``m`` forward prediction.

    Called on the packed vector ``z = (x1, theta)``; returns ``(inf, nan)`` when
    the prediction leaves the divergence bound.
    """

    def __init__(self, model, Y, grid, m=3):
        check_grid_for_order(grid, m)
        self.model, self.grid, self.m = model, grid, m
        self.Y = np.asarray(Y, dtype=float)
        self.Yt = np.ascontiguousarray(self.Y.T)
        self.d = model.d

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        x1, theta = z[:self.d].copy(), z[self.d:].copy()
        if self.model.kernels is not None:
            A, B = scheme_table(self.m)
            with np.errstate(all="ignore"):
                val, gx, gt, ok = _kernels.drivers(*self.model.kernels).shooting_value_and_grads(
                    x1, theta, self.Yt, A, B, self.grid.gaps, self.m, DIVERGENCE_BOUND)
            if not ok or not np.isfinite(val):
                return np.inf, np.full(z.shape, np.nan)
            return val, np.r_[gx, gt]
        return self._reference(x1, theta)

    def _reference(self, x1, theta):
        # plain numpy adjoint of the recurrence; also serves as a check on the kernels
        model, m = self.model, self.m
        try:
            with np.errstate(all="ignore"):
                X = forward_predict(model, theta, x1, self.grid, m).values
        except DivergedError:
            return np.inf, np.full(self.d + model.p, np.nan)
        R = X - self.Y
        val = float(np.sum(R * R))
        T = X.shape[1]
        gaps = self.grid.gaps
        lam_x = 2.0 * R
        lam_f = np.zeros_like(X)
        g_th = np.zeros(model.p)
        for i in range(T - 1, -1, -1):
            col = X[:, i:i + 1]
            v = lam_f[:, i:i + 1]
            lam_x[:, i] += model.state_vjp(col, theta, v)[:, 0]
            g_th += model.param_vjp(col, theta, v)
            if i == 0:
                break
            j = i - 1
            sch = ab_coefficients(min(j + 1, m))
            for l in range(sch.m):
                lam_x[:, j - l] += sch.a[l] * lam_x[:, i]
                lam_f[:, j - l] += (gaps[j] * sch.b[l]) * lam_x[:, i]
        return val, np.r_[lam_x[:, 0], g_th]


def shooting_lsq(model, Y, theta0, m=3, x1_start=None, grid=None, minimizer=None):
    """Fit ``(x1, theta)`` so the forward prediction matches ``Y``.

    ``x1_start`` defaults to the first observation. If the prediction from the
    start already diverges, the start is returned with ``failed=True``.
    """
    if isinstance(Y, TimeSeries):
        grid = Y.grid
    elif grid is None:
        raise ContractError("a time grid is needed when Y is a plain array")
    Yv = np.asarray(_values(Y), dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    if Yv.shape != (model.d, len(grid)) or theta0.shape != (model.p,):
        raise ContractError("observation or parameter shape does not match the model")
    if not (np.all(np.isfinite(Yv)) and np.all(np.isfinite(theta0))):
        raise ContractError("observations and theta0 must be finite")
    x1 = Yv[:, 0] if x1_start is None else np.asarray(x1_start, dtype=float)
    obj = ShootingObjective(model, Yv, grid, m)
    z0 = np.r_[x1, theta0]
    d = model.d
    try:
        res = minimize_smooth(obj, z0, minimizer or MinimizerConfig())
    except NumericDomainError:
        log.debug("shooting start diverges; returning the start")
        return ShootingResult(theta0.copy(), x1.copy(), None, float("inf"), failed=True)
    x1_hat, theta = res.x[:d].copy(), res.x[d:].copy()
    try:
        X_pred = forward_predict(model, theta, x1_hat, grid, m)
    except DivergedError:
        X_pred = None
    return ShootingResult(theta, x1_hat, X_pred, float(res.fun), failed=X_pred is None, nit=res.nit)
