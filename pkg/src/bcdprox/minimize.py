"""Limited-memory BFGS with a strong-Wolfe line search.

Written for the block subproblems of the solver: objectives may return
non-finite values away from the start (divergent fields, overflow) and the
line search then shrinks the step instead of failing. Every accepted step
satisfies the sufficient-decrease condition, so the returned value never
exceeds the starting value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from bcdprox.errors import ContractError, NumericDomainError


@dataclass(frozen=True)
class MinimizerConfig:
    gtol: float = 1e-9  # on the max-norm of the gradient
    max_iter: int = 500
    c1: float = 1e-4
    c2: float = 0.9
    history: int = 10
    max_ls_evals: int = 30

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ContractError("line search needs 0 < c1 < c2 < 1")
        if self.max_iter < 0 or self.history < 1 or self.max_ls_evals < 1:
            raise ContractError("iteration counts must be positive")


class CurvatureMemory:
    """Ring buffer of the most recent L-BFGS curvature pairs ``(s, y)``."""

    def __init__(self, history=10):
        self.history = history
        self.S = self.Y = None
        self.rho = np.zeros(history)
        self.head = 0  # slot of the next pair
        self.count = 0

    def clear(self):
        self.head = self.count = 0

    def __len__(self):
        return self.count

    def push(self, s, y, sy):
        if self.S is None or self.S.shape[1] != s.size:
            self.S = np.zeros((self.history, s.size))
            self.Y = np.zeros((self.history, s.size))
            self.clear()
        self.S[self.head] = s
        self.Y[self.head] = y
        self.rho[self.head] = 1.0 / sy
        self.head = (self.head + 1) % self.history
        self.count = min(self.count + 1, self.history)

    def direction(self, g):
        """``-H g`` for the current inverse Hessian approximation (``-g`` when empty)."""
        if self.count == 0:
            return -g
        return _two_loop(self.S, self.Y, self.rho, self.head, self.count, g)


@njit(cache=True, nogil=True)
def _two_loop(S, Y, rho, head, count, g):
    h = S.shape[0]
    q = -g
    alpha = np.empty(count)
    for i in range(count):  # newest first
        k = (head - 1 - i + h) % h
        a = rho[k] * np.dot(S[k], q)
        alpha[i] = a
        q = q - a * Y[k]
    k = (head - 1 + h) % h
    q = q * (np.dot(S[k], Y[k]) / np.dot(Y[k], Y[k]))
    for i in range(count - 1, -1, -1):
        k = (head - 1 - i + h) % h
        b = rho[k] * np.dot(Y[k], q)
        q = q + (alpha[i] - b) * S[k]
    return q


class MinimizeResult(NamedTuple):
    x: np.ndarray
    fun: float
    grad: np.ndarray
    nit: int
    nfev: int
    status: str  # "gtol", "max_iter", "line_search"


def _finite(f, g):
    return math.isfinite(f) and bool(np.all(np.isfinite(g)))


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic interpolating (a, fa, da), (b, fb, db), or None."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


class _LineSearch:
    def __init__(self, fun, x, f0, g0, p, cfg):
        self.fun, self.x, self.p, self.cfg = fun, x, p, cfg
        self.f0 = f0
        self.d0 = float(g0 @ p)
        self.nfev = 0
        self.best = None  # (alpha, f, g) with the lowest Armijo-satisfying value

    def phi(self, alpha):
        self.nfev += 1
        with np.errstate(all="ignore"):
            f, g = self.fun(self.x + alpha * self.p)
        f = float(f)
        if not _finite(f, g):
            return None, None, None
        d = float(g @ self.p)
        if f <= self.f0 + self.cfg.c1 * alpha * self.d0 and f < self.f0:
            if self.best is None or f < self.best[1]:
                self.best = (alpha, f, g)
        return f, g, d

    def run(self, alpha):
        cfg = self.cfg
        a_prev, f_prev, d_prev = 0.0, self.f0, self.d0
        first = True
        while self.nfev < cfg.max_ls_evals:
            f, g, d = self.phi(alpha)
            if f is None:
                # non-finite: back off towards the last good point
                alpha = a_prev + 0.25 * (alpha - a_prev)
                if alpha - a_prev <= 1e-20 * max(1.0, a_prev):
                    break
                continue
            if f > self.f0 + cfg.c1 * alpha * self.d0 or (not first and f >= f_prev):
                return self.zoom(a_prev, f_prev, d_prev, alpha, f, d)
            if abs(d) <= -cfg.c2 * self.d0:
                return alpha, f, g
            if d >= 0:
                return self.zoom(alpha, f, d, a_prev, f_prev, d_prev)
            a_prev, f_prev, d_prev = alpha, f, d
            alpha = 2.0 * alpha
            first = False
        return self.fallback()

    def zoom(self, lo, flo, dlo, hi, fhi, dhi):
        cfg = self.cfg
        while self.nfev < cfg.max_ls_evals:
            width = abs(hi - lo)
            # predicted change over the bracket is below round-off in f
            if width * abs(self.d0) <= 1e-15 * abs(self.f0) or width <= 1e-16 * max(1.0, abs(lo)):
                break
            trial = None
            if dhi is not None:
                trial = _cubic_min(lo, flo, dlo, hi, fhi, dhi)
            left, right = min(lo, hi), max(lo, hi)
            if trial is None or not (left + 0.1 * width <= trial <= right - 0.1 * width):
                trial = 0.5 * (lo + hi)
            f, g, d = self.phi(trial)
            if f is None:
                hi, fhi, dhi = trial, None, None
                continue
            if f > self.f0 + cfg.c1 * trial * self.d0 or f >= flo:
                hi, fhi, dhi = trial, f, d
            else:
                if abs(d) <= -cfg.c2 * self.d0:
                    return trial, f, g
                if d * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo = trial, f, d
        return self.fallback()

    def fallback(self):
        # Armijo-only acceptance if the curvature condition was never met.
        return self.best if self.best is not None else None


def minimize_smooth(fun, x0, config=None, memory=None):
    """Minimize ``fun`` (returning ``(value, gradient)``) from ``x0`` with L-BFGS.

    The result's value is never larger than the value at ``x0``. Raises
    :class:`NumericDomainError` if the objective is not finite at ``x0``.

    ``memory`` is an optional :class:`CurvatureMemory`; it seeds the inverse
    Hessian approximation and is updated in place, so a sequence of closely
    related problems can share curvature information.
    """
    cfg = config or MinimizerConfig()
    x = np.array(x0, dtype=float)
    shape = x.shape
    x = x.ravel()

    def fg(z):
        f, g = fun(z.reshape(shape))
        return f, np.asarray(g, dtype=float).ravel()

    with np.errstate(all="ignore"):
        f, g = fg(x)
    f = float(f)
    nfev = 1
    if not _finite(f, g):
        raise NumericDomainError("objective is not finite at the starting point")

    if memory is None:
        memory = CurvatureMemory(cfg.history)
    if memory.S is not None and memory.S.shape[1] != x.size:
        memory.clear()
    status = "max_iter"
    nit = 0
    while nit < cfg.max_iter:
        if np.max(np.abs(g), initial=0.0) <= cfg.gtol:
            status = "gtol"
            break
        p = memory.direction(g)
        if not float(g @ p) < 0:
            memory.clear()
            p = -g
        alpha0 = 1.0 if len(memory) else min(1.0, 1.0 / max(np.max(np.abs(g)), 1e-300))
        ls = _LineSearch(fg, x, f, g, p, cfg)
        step = ls.run(alpha0)
        nfev += ls.nfev
        if step is None and len(memory):
            # retry along steepest descent with fresh memory
            memory.clear()
            p = -g
            ls = _LineSearch(fg, x, f, g, p, cfg)
            step = ls.run(min(1.0, 1.0 / max(np.max(np.abs(g)), 1e-300)))
            nfev += ls.nfev
        if step is None:
            status = "line_search"
            break
        alpha, f_new, g_new = step
        x_new = x + alpha * p
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * math.sqrt(float(s @ s) * float(y @ y)):
            memory.push(s, y, sy)
        x, f, g = x_new, f_new, g_new
        nit += 1
    else:
        if np.max(np.abs(g), initial=0.0) <= cfg.gtol:
            status = "gtol"
    return MinimizeResult(x.reshape(shape), f, g.reshape(shape), nit, nfev, status)
