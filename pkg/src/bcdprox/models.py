"""ODE vector fields used as estimation targets.

Every model works column-wise: ``field(X, theta)`` accepts a single state of
shape ``(d,)`` or a batch of states stacked as columns ``(d, N)`` and returns
an array of the same shape. The adjoint products ``state_vjp`` and
``param_vjp`` are what the objective and shooting gradients consume; the
dense Jacobians exist for the EKF linearization and for testing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from bcdprox import _kernels as K
from bcdprox.discretize import TimeGrid
from bcdprox.errors import ContractError, NumericDomainError


class OdeModel:
    """Base class for a parameterized vector field ``f(x, theta)``.

    Subclasses set ``name``, ``d`` and ``p`` and implement ``field``,
    ``state_jacobian``, ``param_jacobian``, ``state_vjp`` and ``param_vjp``.
    Models that are affine in the parameters also implement ``f0`` and
    ``f1`` so that ``f(x, theta) = f0(x) + f1(x) @ theta``.
    """

    name: str
    d: int
    p: int

    linear_in_params = False
    # optional compiled row kernels (field, svjp, pvjp); see bcdprox._kernels
    kernels = None

    def field(self, x, theta):
        raise NotImplementedError

    def state_jacobian(self, x, theta):
        raise NotImplementedError

    def param_jacobian(self, x, theta):
        raise NotImplementedError

    def state_vjp(self, X, theta, V):
        """Column-wise ``J_x(x_c)^T v_c`` for states ``X`` and cotangents ``V`` (both d x N)."""
        raise NotImplementedError

    def param_vjp(self, X, theta, V):
        """``sum_c J_theta(x_c)^T v_c``, shape ``(p,)``."""
        raise NotImplementedError

    def f0(self, x):
        raise ContractError(f"model {self.name!r} has no linear-in-parameter decomposition")

    def f1(self, x):
        raise ContractError(f"model {self.name!r} has no linear-in-parameter decomposition")


def _split(x):
    x = np.asarray(x, dtype=float)
    return x, x[0], x[1]


@dataclass(frozen=True)
class LotkaVolterra(OdeModel):
    """Predator-prey model.

    dx0/dt = th0*x0 - th1*x0*x1,  dx1/dt = th2*x0*x1 - th3*x1
    """

    name: str = "lotka_volterra"
    d: int = 2
    p: int = 4
    kernels = (K.lv_field, K.lv_svjp, K.lv_pvjp)
    linear_in_params = True

    def field(self, x, theta):
        x, x0, x1 = _split(x)
        th = theta
        return np.stack([th[0] * x0 - th[1] * x0 * x1, th[2] * x0 * x1 - th[3] * x1])

    def state_jacobian(self, x, theta):
        x0, x1 = float(x[0]), float(x[1])
        th = theta
        return np.array([[th[0] - th[1] * x1, -th[1] * x0],
                         [th[2] * x1, th[2] * x0 - th[3]]])

    def param_jacobian(self, x, theta=None):
        return self.f1(x)

    def state_vjp(self, X, theta, V):
        x0, x1 = X[0], X[1]
        th = theta
        return np.stack([(th[0] - th[1] * x1) * V[0] + th[2] * x1 * V[1],
                         -th[1] * x0 * V[0] + (th[2] * x0 - th[3]) * V[1]])

    def param_vjp(self, X, theta, V):
        x0, x1 = X[0], X[1]
        x0x1 = x0 * x1
        return np.array([np.dot(x0, V[0]), -np.dot(x0x1, V[0]),
                         np.dot(x0x1, V[1]), -np.dot(x1, V[1])])

    def f0(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def f1(self, x):
        x0, x1 = float(x[0]), float(x[1])
        return np.array([[x0, -x0 * x1, 0.0, 0.0],
                         [0.0, 0.0, x0 * x1, -x1]])


@dataclass(frozen=True)
class FitzHughNagumo(OdeModel):
    """Spike-generation model in its original parameterization.

    dx0/dt = th2*(x0 - x0^3/3 + x1),  dx1/dt = -(x0 - th0 + th1*x1)/th2

    Not affine in ``th2``; see :class:`FitzHughNagumoLinear` for the
    reparameterized form.
    """

    name: str = "fitzhugh_nagumo"
    d: int = 2
    p: int = 3
    kernels = (K.fhn_field, K.fhn_svjp, K.fhn_pvjp)

    def field(self, x, theta):
        x, x0, x1 = _split(x)
        th = theta
        return np.stack([th[2] * (x0 - x0 * x0 * x0 / 3.0 + x1),
                         -(x0 - th[0] + th[1] * x1) / th[2]])

    def state_jacobian(self, x, theta):
        x0 = float(x[0])
        th = theta
        return np.array([[th[2] * (1.0 - x0 * x0), th[2]],
                         [-1.0 / th[2], -th[1] / th[2]]])

    def param_jacobian(self, x, theta):
        x0, x1 = float(x[0]), float(x[1])
        th = theta
        return np.array([[0.0, 0.0, x0 - x0 * x0 * x0 / 3.0 + x1],
                         [1.0 / th[2], -x1 / th[2], (x0 - th[0] + th[1] * x1) / (th[2] * th[2])]])

    def state_vjp(self, X, theta, V):
        x0 = X[0]
        th = theta
        return np.stack([th[2] * (1.0 - x0 * x0) * V[0] - V[1] / th[2],
                         th[2] * V[0] - th[1] / th[2] * V[1]])

    def param_vjp(self, X, theta, V):
        x0, x1 = X[0], X[1]
        th = theta
        g = x0 - x0 * x0 * x0 / 3.0 + x1
        return np.array([V[1].sum() / th[2],
                         -np.dot(x1, V[1]) / th[2],
                         np.dot(g, V[0]) + np.dot(x0 - th[0] + th[1] * x1, V[1]) / (th[2] * th[2])])


@dataclass(frozen=True)
class FitzHughNagumoLinear(OdeModel):
    """FitzHugh-Nagumo with free coefficients ``c = (th2, 1/th2, th0/th2, th1/th2)``.

    dx0/dt = c0*(x0 - x0^3/3 + x1),  dx1/dt = -c1*x0 + c2 - c3*x1
    """

    name: str = "fitzhugh_nagumo_linear"
    d: int = 2
    p: int = 4
    kernels = (K.fhnl_field, K.fhnl_svjp, K.fhnl_pvjp)
    linear_in_params = True

    @staticmethod
    def from_original(theta):
        th = np.asarray(theta, dtype=float)
        return np.array([th[2], 1.0 / th[2], th[0] / th[2], th[1] / th[2]])

    def field(self, x, theta):
        x, x0, x1 = _split(x)
        c = theta
        return np.stack([c[0] * (x0 - x0 * x0 * x0 / 3.0 + x1), -c[1] * x0 + c[2] - c[3] * x1])

    def state_jacobian(self, x, theta):
        x0 = float(x[0])
        c = theta
        return np.array([[c[0] * (1.0 - x0 * x0), c[0]], [-c[1], -c[3]]])

    def param_jacobian(self, x, theta=None):
        return self.f1(x)

    def state_vjp(self, X, theta, V):
        x0 = X[0]
        c = theta
        return np.stack([c[0] * (1.0 - x0 * x0) * V[0] - c[1] * V[1], c[0] * V[0] - c[3] * V[1]])

    def param_vjp(self, X, theta, V):
        x0, x1 = X[0], X[1]
        return np.array([np.dot(x0 - x0 * x0 * x0 / 3.0 + x1, V[0]), -np.dot(x0, V[1]),
                         V[1].sum(), -np.dot(x1, V[1])])

    def f0(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def f1(self, x):
        x0, x1 = float(x[0]), float(x[1])
        return np.array([[x0 - x0 * x0 * x0 / 3.0 + x1, 0.0, 0.0, 0.0],
                         [0.0, -x0, 1.0, -x1]])


@dataclass(frozen=True)
class Rossler(OdeModel):
    """Rossler attractor.

    dx0/dt = -x1 - x2,  dx1/dt = x0 + th0*x1,  dx2/dt = th1 + x2*(x0 - th2)
    """

    name: str = "rossler"
    d: int = 3
    p: int = 3
    kernels = (K.rossler_field, K.rossler_svjp, K.rossler_pvjp)
    linear_in_params = True

    def field(self, x, theta):
        x = np.asarray(x, dtype=float)
        x0, x1, x2 = x[0], x[1], x[2]
        th = theta
        return np.stack([-x1 - x2, x0 + th[0] * x1, th[1] + x2 * (x0 - th[2])])

    def state_jacobian(self, x, theta):
        x0, x2 = float(x[0]), float(x[2])
        th = theta
        return np.array([[0.0, -1.0, -1.0], [1.0, th[0], 0.0], [x2, 0.0, x0 - th[2]]])

    def param_jacobian(self, x, theta=None):
        return self.f1(x)

    def state_vjp(self, X, theta, V):
        x0, x2 = X[0], X[2]
        th = theta
        return np.stack([V[1] + x2 * V[2], -V[0] + th[0] * V[1], -V[0] + (x0 - th[2]) * V[2]])

    def param_vjp(self, X, theta, V):
        return np.array([np.dot(X[1], V[1]), V[2].sum(), -np.dot(X[2], V[2])])

    def f0(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([-x[1] - x[2], x[0], x[0] * x[2]])

    def f1(self, x):
        x1, x2 = float(x[1]), float(x[2])
        return np.array([[0.0, 0.0, 0.0], [x1, 0.0, 0.0], [0.0, 1.0, -x2]])


@dataclass(frozen=True)
class Lorenz96(OdeModel):
    """Lorenz-96 with cyclic indices.

    dx_k/dt = (x_{k+1} - x_{k-2}) * x_{k-1} - x_k + th0,  k = 0..d-1
    """

    d: int = 40
    name: str = "lorenz96"
    p: int = 1
    kernels = (K.l96_field, K.l96_svjp, K.l96_pvjp)
    linear_in_params = True

    def __post_init__(self):
        if self.d < 4:
            raise ContractError("lorenz96 needs d >= 4")

    def f0(self, x):
        x = np.asarray(x, dtype=float)
        # np.roll(x, 1)[k] = x[k-1]; np.roll(x, -1)[k] = x[k+1]
        xp1 = np.roll(x, -1, axis=0)
        xm1 = np.roll(x, 1, axis=0)
        xm2 = np.roll(x, 2, axis=0)
        return (xp1 - xm2) * xm1 - x

    def f1(self, x):
        return np.ones((self.d, 1))

    def field(self, x, theta):
        return self.f0(x) + theta[0]

    def state_jacobian(self, x, theta):
        x = np.asarray(x, dtype=float)
        d = self.d
        J = -np.eye(d)
        for k in range(d):
            J[k, (k + 1) % d] += x[(k - 1) % d]
            J[k, (k - 2) % d] -= x[(k - 1) % d]
            J[k, (k - 1) % d] += x[(k + 1) % d] - x[(k - 2) % d]
        return J

    def param_jacobian(self, x, theta=None):
        return self.f1(x)

    def state_vjp(self, X, theta, V):
        # (J^T v)_c collects the four equations in which x_c appears.
        def r(a, s):
            return np.roll(a, s, axis=0)
        return (r(V, 1) * r(X, 2)
                - r(V, -2) * r(X, -1)
                + r(V, -1) * (r(X, -2) - r(X, 1))
                - V)

    def param_vjp(self, X, theta, V):
        return np.array([V.sum()])


class Benchmark(NamedTuple):
    model: OdeModel
    theta: np.ndarray
    x1: np.ndarray
    grid: TimeGrid


_GRIDS = {
    "lotka_volterra": (0.0, 2.0, 0.1),
    "fitzhugh_nagumo": (0.0, 20.0, 0.05),
    "rossler": (0.0, 20.0, 0.05),
    "lorenz96": (0.0, 4.0, 0.01),
}

BENCHMARKS = tuple(_GRIDS)


def default_grid_params(name):
    """``(t0, t_end, dt)`` used for the named benchmark."""
    try:
        return _GRIDS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; expected one of {BENCHMARKS}") from None


def make_model(name):
    if name == "lotka_volterra":
        return LotkaVolterra()
    if name == "fitzhugh_nagumo":
        return FitzHughNagumo()
    if name == "rossler":
        return Rossler()
    if name == "lorenz96":
        return Lorenz96()
    raise KeyError(f"unknown model {name!r}; expected one of {BENCHMARKS}")


def benchmark_registry(name, seed=0):
    """Model, true parameters, true initial state and time grid for a benchmark.

    ``seed`` only matters for ``lorenz96``, whose initial state is drawn from
    a standard normal distribution.
    """
    model = make_model(name)
    grid = TimeGrid.uniform(*_GRIDS[name])
    if name == "lotka_volterra":
        return Benchmark(model, np.array([2.0, 1.0, 4.0, 1.0]), np.array([5.0, 3.0]), grid)
    if name == "fitzhugh_nagumo":
        return Benchmark(model, np.array([0.5, 0.2, 3.0]), np.array([-1.0, 1.0]), grid)
    if name == "rossler":
        return Benchmark(model, np.array([0.2, 0.2, 3.0]), np.array([1.13, -1.74, 0.02]), grid)
    from bcdprox.rng import stream
    x1 = stream(seed, 0, "lorenz96_initial_state").standard_normal(model.d)
    return Benchmark(model, np.array([8.0]), x1, grid)


def _check(model, x, theta):
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if x.shape != (model.d,):
        raise ContractError(f"{model.name}: state must have shape ({model.d},), got {x.shape}")
    if theta.shape != (model.p,):
        raise ContractError(f"{model.name}: parameters must have shape ({model.p},), got {theta.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(theta))):
        raise NumericDomainError("non-finite state or parameter")
    return x, theta


def eval_field(model, x, theta):
    """Checked evaluation of ``f(x, theta)`` at a single state."""
    x, theta = _check(model, x, theta)
    with np.errstate(all="ignore"):
        out = model.field(x, theta)
    if not np.all(np.isfinite(out)):
        raise NumericDomainError(f"{model.name}: non-finite field value at x={x}, theta={theta}")
    return out


def eval_param_jacobian(model, x, theta):
    x, theta = _check(model, x, theta)
    return model.param_jacobian(x, theta)


def eval_state_jacobian(model, x, theta):
    x, theta = _check(model, x, theta)
    return model.state_jacobian(x, theta)
