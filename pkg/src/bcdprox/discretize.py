"""Time grids, Adams-Bashforth multistep prediction and reference integration."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from bcdprox import _kernels
from bcdprox.errors import ContractError, DivergedError

DIVERGENCE_BOUND = 1e8
MAX_ORDER = 5


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing observation times ``t_1 < ... < t_T``."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise ContractError("time grid must be a non-empty 1-D array")
        if not np.all(np.isfinite(t)):
            raise ContractError("time grid contains non-finite values")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ContractError("time grid must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)
        g = np.diff(t)
        g.setflags(write=False)
        object.__setattr__(self, "_gaps", g)

    @classmethod
    def uniform(cls, t0, t_end, dt):
        """``T = round((t_end - t0) / dt)`` points ``t0 + i*dt``; ``t_end`` itself is excluded."""
        if dt <= 0:
            raise ContractError("dt must be positive")
        n = int(round((t_end - t0) / dt))
        if n < 1:
            raise ContractError("grid needs at least one point")
        return cls(t0 + dt * np.arange(n))

    @property
    def gaps(self):
        return self._gaps

    def __len__(self):
        return self.times.size

    def is_uniform(self, rtol=1e-9):
        g = self.gaps
        if g.size == 0:
            return True
        return bool(np.max(np.abs(g - g.mean())) <= rtol * g.mean())

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.times, other.times)

    def __hash__(self):
        return hash(self.times.tobytes())


@dataclass(frozen=True)
class TimeSeries:
    """States stored column-wise: ``values[:, i]`` is the state at ``grid.times[i]``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != len(self.grid):
            raise ContractError(f"values must be d x {len(self.grid)}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ContractError("time series contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def d(self):
        return self.values.shape[0]

    @property
    def T(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class MultistepScheme:
    """Explicit linear m-step method ``x_{i+1} = sum a_j x_{i-j} + dt * sum b_j f_{i-j}``."""

    m: int
    a: tuple
    b: tuple


def _integrate_lagrange_basis(m, j):
    # Basis polynomial for node s = -j among nodes s = 0, -1, ..., -(m-1), integrated over [0, 1].
    poly = [Fraction(1)]  # coefficients, lowest degree first
    for node in range(m):
        if node == j:
            continue
        denom = Fraction(node - j)
        # multiply by (s + node) / (node - j)
        new = [Fraction(0)] * (len(poly) + 1)
        for k, c in enumerate(poly):
            new[k] += c * node / denom
            new[k + 1] += c / denom
        poly = new
    return sum(c / (k + 1) for k, c in enumerate(poly))


@lru_cache(maxsize=None)
def ab_coefficients(m):
    """Adams-Bashforth scheme of order ``m`` (1 <= m <= 5) on a uniform step."""
    if not isinstance(m, (int, np.integer)) or not 1 <= m <= MAX_ORDER:
        raise ContractError(f"Adams-Bashforth order must be in 1..{MAX_ORDER}, got {m!r}")
    m = int(m)
    b = tuple(float(_integrate_lagrange_basis(m, j)) for j in range(m))
    a = (1.0,) + (0.0,) * (m - 1)
    return MultistepScheme(m, a, b)


@lru_cache(maxsize=None)
def scheme_table(m):
    """``(A, B)``, each ``m x m``: row ``k - 1`` holds the order-``k`` coefficients, zero padded."""
    A = np.zeros((m, m))
    B = np.zeros((m, m))
    for k in range(1, m + 1):
        sch = ab_coefficients(k)
        A[k - 1, :k] = sch.a
        B[k - 1, :k] = sch.b
    A.setflags(write=False)
    B.setflags(write=False)
    return A, B


def check_grid_for_order(grid, m):
    if m >= 2 and not grid.is_uniform():
        raise ContractError("multistep orders m >= 2 require a uniform time grid")


def _combine(scheme, states, fvals, delta):
    # Fixed summation order; fidelity() reproduces exactly this arithmetic.
    acc_x = scheme.a[0] * states[0]
    acc_f = scheme.b[0] * fvals[0]
    for j in range(1, scheme.m):
        acc_x = acc_x + scheme.a[j] * states[j]
        acc_f = acc_f + scheme.b[j] * fvals[j]
    return acc_x + delta * acc_f


def mstep_next(model, theta, scheme, recent, delta):
    """One multistep prediction from ``recent`` states given newest first."""
    recent = [np.asarray(x, dtype=float) for x in recent]
    if len(recent) != scheme.m:
        raise ContractError(f"scheme of order {scheme.m} needs {scheme.m} states, got {len(recent)}")
    theta = np.asarray(theta, dtype=float)
    fvals = [model.field(x, theta) for x in recent]
    return _combine(scheme, recent, fvals, delta)


def forward_predict(model, theta, x1, grid, m):
    """Trajectory generated from ``x1`` by repeated multistep prediction.

    The state at index ``i + 1`` (0-based) uses order ``min(i + 1, m)``.
    Raises :class:`DivergedError` if any component leaves ``[-1e8, 1e8]``.
    """
    if len(grid) < 2:
        raise ContractError("forward prediction needs at least two grid points")
    check_grid_for_order(grid, m)
    theta = np.asarray(theta, dtype=float)
    gaps = grid.gaps
    if model.kernels is not None:
        A, B = scheme_table(m)
        x1 = np.array(x1, dtype=float)
        with np.errstate(all="ignore"):
            Xt, bad = _kernels.drivers(*model.kernels).forward_predict(
                x1, theta, A, B, gaps, m, DIVERGENCE_BOUND)
        if bad >= 0:
            raise DivergedError(f"forward prediction diverged after index {bad}", int(bad))
        return TimeSeries(grid, Xt.T)
    schemes = [ab_coefficients(k) for k in range(1, m + 1)]
    T = len(grid)
    X = np.empty((len(x1), T))
    F = np.empty_like(X)
    X[:, 0] = x1
    with np.errstate(all="ignore"):
        F[:, 0] = model.field(X[:, 0], theta)
        for i in range(T - 1):
            k = min(i + 1, m)
            sch = schemes[k - 1]
            states = [X[:, i - j] for j in range(k)]
            fvals = [F[:, i - j] for j in range(k)]
            nxt = _combine(sch, states, fvals, gaps[i])
            if not np.all(np.abs(nxt) <= DIVERGENCE_BOUND):
                raise DivergedError(f"forward prediction diverged after index {i}", i)
            X[:, i + 1] = nxt
            F[:, i + 1] = model.field(nxt, theta)
    return TimeSeries(grid, X)


# Dormand-Prince tableau; the 5th-order weights are used as a fixed-step method.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_DP_B = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]


def _rk5_gap(f, x, dt, n):
    h = dt / n
    for _ in range(n):
        k = []
        for s in range(6):
            xs = x
            for a, kk in zip(_DP_A[s], k):
                xs = xs + (h * a) * kk
            k.append(f(xs))
        incr = _DP_B[0] * k[0]
        for bw, kk in zip(_DP_B[2:], k[2:]):
            incr = incr + bw * kk
        x = x + h * incr
    return x


def rk_integrate(model, theta, x1, grid, rtol=1e-10, substeps=None, max_substeps=1 << 16):
    """Reference trajectory from a fifth-order Runge-Kutta method.

    Every observation gap is split into equal substeps. With ``substeps=None``
    the count for each gap starts from the previous gap's count (halved) and is
    doubled until ``n`` and ``2n`` substeps agree componentwise to ``rtol``
    relative (floored at ``1e-8 * max|x|``); the ``2n`` result is kept. The procedure has no data-dependent step rejection
    inside a gap, so the result is a deterministic function of the inputs.
    """
    theta = np.asarray(theta, dtype=float)
    x1 = np.asarray(x1, dtype=float)

    def f(x):
        return model.field(x, theta)

    T = len(grid)
    gaps = grid.gaps
    X = np.empty((x1.size, T))
    X[:, 0] = x1
    x = x1
    n = 1
    with np.errstate(all="ignore"):
        for i in range(T - 1):
            if substeps is not None:
                x = _rk5_gap(f, x, gaps[i], substeps)
            else:
                n = max(1, n // 2)
                coarse = _rk5_gap(f, x, gaps[i], n)
                while True:
                    fine = _rk5_gap(f, x, gaps[i], 2 * n)
                    if not np.all(np.abs(fine) <= DIVERGENCE_BOUND):
                        break
                    scale = np.abs(fine) + 1e-8 * np.max(np.abs(fine)) + 1e-300
                    if np.all(np.abs(fine - coarse) <= rtol * scale):
                        break
                    if 2 * n >= max_substeps:
                        raise ContractError(f"substep budget exhausted on gap {i}")
                    n *= 2
                    coarse = fine
                x = fine
            if not np.all(np.abs(x) <= DIVERGENCE_BOUND):
                raise DivergedError(f"integration diverged after index {i}", i)
            X[:, i + 1] = x
    return TimeSeries(grid, X)
