"""Oracles shared by the unit and acceptance tests: finite-difference probes and exact determinants."""

import numpy as np

from bcdprox.discretize import forward_predict, rk_integrate
from bcdprox.models import benchmark_registry
from bcdprox.objective import FidelityProblem, ProxAnchor, grad_states, grad_theta, prox_objective

REL_STEP = 1e-6


def _rel(a, b, resolution=0.0):
    """Normwise relative error of analytic ``a`` against the difference quotient ``b``.

    ``resolution`` is the round-off floor of the quotient itself (about
    ``eps * |F| / h``); discrepancies below it carry no information.
    """
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    excess = max(float(np.linalg.norm(a - b)) - resolution, 0.0)
    return excess / max(float(np.linalg.norm(b)), 1e-300)


def _resolution(fval, h):
    return 16.0 * np.finfo(float).eps * abs(fval) / h


def probe_setup(name, m):
    """Registry problem of order ``m`` and its reference trajectory (the probe centre)."""
    b = benchmark_registry(name)
    X = rk_integrate(b.model, b.theta, b.x1, b.grid).values
    return b, FidelityProblem(b.model, b.grid, m), X


def probe_errors(name, m, n_probes=100, lam=1.0, seed=0):
    """Worst relative errors of (theta gradient, state directional derivative, state coordinates)."""
    b, problem, X = probe_setup(name, m)
    rng = np.random.default_rng(seed)
    scale = 0.1 * (1.0 + np.abs(X).mean())
    worst = [0.0, 0.0, 0.0]
    for _ in range(n_probes):
        Xp = X + scale * rng.standard_normal(X.shape)
        theta = b.theta * (1.0 + 0.2 * rng.standard_normal(b.model.p))
        anchor = ProxAnchor(X + scale * rng.standard_normal(X.shape), lam)

        def F(Z, th):
            return prox_objective(problem, anchor, Z, th)

        gt = grad_theta(problem, Xp, theta)
        fd = np.empty(b.model.p)
        for k in range(b.model.p):
            h = REL_STEP * (1.0 + abs(theta[k]))
            tp, tm = theta.copy(), theta.copy()
            tp[k] += h
            tm[k] -= h
            fd[k] = (F(Xp, tp) - F(Xp, tm)) / (2 * h)
        F0 = F(Xp, theta)
        h_min = REL_STEP * (1.0 + np.abs(theta).min())
        worst[0] = max(worst[0], _rel(gt, fd, _resolution(F0, h_min)))

        gx = grad_states(problem, anchor, Xp, theta)
        # directional derivative with per-coordinate steps REL_STEP * (1 + |x|)
        W = rng.standard_normal(X.shape) * (1.0 + np.abs(Xp))
        fd = (F(Xp + REL_STEP * W, theta) - F(Xp - REL_STEP * W, theta)) / (2 * REL_STEP)
        worst[1] = max(worst[1], _rel(float(np.sum(gx * W)), fd, _resolution(F0, REL_STEP)))

        rows = rng.integers(X.shape[0], size=8)
        cols = rng.integers(X.shape[1], size=8)
        fd = np.empty(8)
        for k, (i, j) in enumerate(zip(rows, cols)):
            h = REL_STEP * (1.0 + abs(Xp[i, j]))
            Zp, Zm = Xp.copy(), Xp.copy()
            Zp[i, j] += h
            Zm[i, j] -= h
            fd[k] = (F(Zp, theta) - F(Zm, theta)) / (2 * h)
        worst[2] = max(worst[2], _rel(gx[rows, cols], fd, _resolution(F0, REL_STEP)))
    return worst


def zero_fidelity_draws(name, m, n_draws=200, seed=0):
    """Worst ratio ``E(xhat, theta) / (1 + ||xhat||^2)`` over random (theta, x1) draws.

    Draws whose prediction leaves the divergence bound are redrawn.
    """
    from bcdprox.errors import DivergedError
    from bcdprox.objective import fidelity

    b = benchmark_registry(name)
    problem = FidelityProblem(b.model, b.grid, m)
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < n_draws:
        theta = b.theta * (1.0 + 0.3 * rng.standard_normal(b.model.p))
        x1 = b.x1 + 0.5 * rng.standard_normal(b.model.d)
        try:
            Xh = forward_predict(b.model, theta, x1, b.grid, m).values
        except DivergedError:
            continue
        worst = max(worst, fidelity(problem, Xh, theta) / (1.0 + float(np.sum(Xh * Xh))))
        done += 1
    return worst


def bareiss_det(M):
    """Exact determinant of an integer matrix by fraction-free elimination."""
    A = [[int(v) for v in row] for row in M]
    n = len(A)
    sign, prev = 1, 1
    for k in range(n - 1):
        if A[k][k] == 0:
            swap = next((r for r in range(k + 1, n) if A[r][k] != 0), None)
            if swap is None:
                return 0
            A[k], A[swap] = A[swap], A[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) // prev
        prev = A[k][k]
    return sign * A[n - 1][n - 1]
