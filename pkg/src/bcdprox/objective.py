"""Multistep fidelity ``E``, its proximal variant ``F_n`` and gradients.

States are ``d x T`` arrays (``TimeSeries`` is accepted wherever a state
array is). Residual ``j`` (0-based, ``j = 0..T-2``) compares state ``j + 1``
with its Adams-Bashforth prediction of order ``k_j = min(j + 1, m)`` from
states ``j, j-1, ..., j-k_j+1``. The prediction is evaluated with exactly the
same floating point operations as :func:`bcdprox.discretize.forward_predict`,
so a forward-predicted trajectory has residuals that are exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from bcdprox.discretize import (
    TimeGrid,
    TimeSeries,
    _combine,
    ab_coefficients,
    check_grid_for_order,
    scheme_table,
)
from bcdprox import _kernels
from bcdprox.errors import ContractError


def _values(X):
    return X.values if isinstance(X, TimeSeries) else np.asarray(X, dtype=float)


@dataclass(frozen=True)
class FidelityProblem:
    model: object
    grid: TimeGrid
    m: int = 3
    schemes: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.grid) < 2:
            raise ContractError("fidelity needs at least two time points")
        check_grid_for_order(self.grid, self.m)
        object.__setattr__(self, "schemes", tuple(ab_coefficients(k) for k in range(1, self.m + 1)))

    @property
    def T(self):
        return len(self.grid)

    @property
    def gaps(self):
        return self.grid.gaps

    def _check(self, X, theta):
        X = _values(X)
        theta = np.asarray(theta, dtype=float)
        if X.shape != (self.model.d, self.T):
            raise ContractError(f"states must be {self.model.d} x {self.T}, got {X.shape}")
        if theta.shape != (self.model.p,):
            raise ContractError(f"parameters must have shape ({self.model.p},), got {theta.shape}")
        return X, theta

    def residuals(self, X, theta, F=None):
        """``d x (T-1)`` residual matrix; ``F`` may pass precomputed field values."""
        X, theta = self._check(X, theta)
        kern = self.model.kernels
        if kern is not None and F is None:
            A, B = scheme_table(self.m)
            Xt = np.ascontiguousarray(X.T)
            return _kernels.drivers(*kern).residuals(Xt, theta, A, B, self.gaps, self.m).T
        if F is None:
            F = self.model.field(X, theta)
        T, m = self.T, self.m
        gaps = self.gaps
        R = np.empty((X.shape[0], T - 1))
        ramp = min(m - 1, T - 1)
        for j in range(ramp):
            sch = self.schemes[j]
            pred = _combine(sch, [X[:, j - l] for l in range(j + 1)],
                            [F[:, j - l] for l in range(j + 1)], gaps[j])
            R[:, j] = X[:, j + 1] - pred
        if m - 1 < T - 1:
            sch = self.schemes[m - 1]
            lo, hi = m - 1, T - 1  # rows with full order
            acc_x = sch.a[0] * X[:, lo:hi]
            acc_f = sch.b[0] * F[:, lo:hi]
            for l in range(1, m):
                acc_x = acc_x + sch.a[l] * X[:, lo - l:hi - l]
                acc_f = acc_f + sch.b[l] * F[:, lo - l:hi - l]
            R[:, lo:hi] = X[:, lo + 1:hi + 1] - (acc_x + gaps[lo:hi] * acc_f)
        return R

    def _adjoint(self, G):
        """Scatter residual cotangents ``G`` onto direct state and field-value cotangents."""
        d, T, m = G.shape[0], self.T, self.m
        gaps = self.gaps
        gX = np.zeros((d, T))
        gF = np.zeros((d, T))
        gX[:, 1:] += G
        ramp = min(m - 1, T - 1)
        for j in range(ramp):
            sch = self.schemes[j]
            for l in range(j + 1):
                gX[:, j - l] -= sch.a[l] * G[:, j]
                gF[:, j - l] -= (gaps[j] * sch.b[l]) * G[:, j]
        if m - 1 < T - 1:
            sch = self.schemes[m - 1]
            lo, hi = m - 1, T - 1
            Gf = G[:, lo:hi]
            Gd = gaps[lo:hi] * Gf
            for l in range(m):
                if sch.a[l] != 0.0:
                    gX[:, lo - l:hi - l] -= sch.a[l] * Gf
                gF[:, lo - l:hi - l] -= sch.b[l] * Gd
        return gX, gF

    def value_and_grads_rows(self, Xt, theta, want_x=True, want_theta=True):
        """Unchecked variant of :meth:`value_and_grads` on time-major states ``Xt`` (``T x d``).

        The state gradient is returned time-major as well. Meant for inner loops
        that have validated their inputs once.
        """
        kern = self.model.kernels
        if kern is not None:
            A, B = scheme_table(self.m)
            E, gx, gt = _kernels.drivers(*kern).value_and_grads(
                Xt, theta, A, B, self.gaps, self.m, want_x, want_theta)
            return E, (gx if want_x else None), (gt if want_theta else None)
        E, gx, gt = self.value_and_grads(Xt.T, theta, want_x, want_theta)
        return E, (gx.T if want_x else None), gt

    def value_and_grads(self, X, theta, want_x=True, want_theta=True):
        """``(E, dE/dX, dE/dtheta)``; gradients not requested are returned as None."""
        X, theta = self._check(X, theta)
        if self.model.kernels is not None:
            E, gx, gt = self.value_and_grads_rows(np.ascontiguousarray(X.T), theta, want_x, want_theta)
            return E, (gx.T if want_x else None), gt
        F = self.model.field(X, theta)
        R = self.residuals(X, theta, F)
        E = float(np.sum(R * R))
        gX, gF = self._adjoint(2.0 * R)
        grad_x = grad_t = None
        if want_x:
            grad_x = gX + self.model.state_vjp(X, theta, gF)
        if want_theta:
            grad_t = np.asarray(self.model.param_vjp(X, theta, gF), dtype=float)
        return E, grad_x, grad_t


@dataclass(frozen=True)
class ProxAnchor:
    anchor: np.ndarray
    lam: float = 1.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ContractError("lambda must be nonnegative")
        object.__setattr__(self, "anchor", np.array(_values(self.anchor), dtype=float))


def fidelity(problem, X, theta):
    R = problem.residuals(X, theta)
    return float(np.sum(R * R))


def prox_objective(problem, anchor, X, theta):
    X = _values(X)
    if X.shape != anchor.anchor.shape:
        raise ContractError("anchor and states differ in shape")
    diff = X - anchor.anchor
    return fidelity(problem, X, theta) + anchor.lam * float(np.sum(diff * diff))


def grad_theta(problem, X, theta):
    """Gradient of ``F_n`` in the parameters (the proximal term does not depend on them)."""
    return problem.value_and_grads(X, theta, want_x=False)[2]


def grad_states(problem, anchor, X, theta):
    X = _values(X)
    g = problem.value_and_grads(X, theta, want_theta=False)[1]
    if anchor is not None and anchor.lam != 0.0:
        g = g + 2.0 * anchor.lam * (X - anchor.anchor)
    return g


def hessian_theta(problem, X):
    """``2 sum_i f1(x_i)^T f1(x_i) gap_i^2`` for the Euler fidelity of an affine-in-parameter model."""
    if problem.m != 1:
        raise ContractError("the parameter Hessian diagnostic is defined for m = 1 only")
    model = problem.model
    if not getattr(model, "linear_in_params", False):
        raise ContractError(f"model {model.name!r} has no linear-in-parameter decomposition")
    X = _values(X)
    gaps = problem.gaps
    H = np.zeros((model.p, model.p))
    for i in range(problem.T - 1):
        B = model.f1(X[:, i])
        H += (gaps[i] ** 2) * (B.T @ B)
    return 2.0 * H


def split_index(T):
    """Number of states in the first half ``x+`` (``T // 2``, which is ``(T-1)/2`` for odd T)."""
    if T < 2:
        raise ContractError("need at least two states to split")
    return T // 2


def block_hessian_delta0(d, T, half="plus"):
    """Hessian of ``sum ||x_{i+1} - x_i||^2`` over one half of the states, the other half fixed.

    ``half="plus"`` is the first ``T//2`` states, ``"minus"`` the rest.
    """
    if d < 1 or T < 2:
        raise ContractError("need d >= 1 and T >= 2")
    n_plus = split_index(T)
    n = n_plus if half == "plus" else T - n_plus
    diag = np.full(n, 4.0)
    if half == "plus":
        diag[0] = 2.0
    elif half == "minus":
        diag[-1] = 2.0
    else:
        raise ContractError("half must be 'plus' or 'minus'")
    band = np.diag(diag) - 2.0 * (np.eye(n, k=1) + np.eye(n, k=-1))
    return np.kron(band, np.eye(d))


def half_block_hessian_delta0(d, T):
    """The ``x+`` block Hessian at zero time gaps; ``T`` must be even."""
    if T % 2:
        raise ContractError("T must be even; odd T splits at (T-1)/2, see block_hessian_delta0")
    return block_hessian_delta0(d, T, "plus")
