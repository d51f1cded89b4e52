import sys

import numpy as np
import pytest
from hypothesis import settings

from bcdprox.models import OdeModel

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


class Growth(OdeModel):
    """Scalar test field ``f(x, theta) = theta * x`` (numpy reference path, no compiled kernels)."""

    name = "growth"
    d = 1
    p = 1
    linear_in_params = True

    def field(self, x, theta):
        return theta[0] * np.asarray(x, dtype=float)

    def state_jacobian(self, x, theta):
        return np.array([[theta[0]]])

    def param_jacobian(self, x, theta=None):
        return self.f1(x)

    def state_vjp(self, X, theta, V):
        return theta[0] * V

    def param_vjp(self, X, theta, V):
        return np.array([np.sum(X * V)])

    def f0(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def f1(self, x):
        return np.array([[float(np.asarray(x).ravel()[0])]])


class Frozen(OdeModel):
    """``f = 0`` for any parameter; every constant trajectory is an exact solution."""

    name = "frozen"
    d = 2
    p = 1
    linear_in_params = True

    def field(self, x, theta):
        return np.zeros_like(np.asarray(x, dtype=float))

    def state_jacobian(self, x, theta):
        return np.zeros((2, 2))

    def param_jacobian(self, x, theta=None):
        return np.zeros((2, 1))

    def state_vjp(self, X, theta, V):
        return np.zeros_like(V)

    def param_vjp(self, X, theta, V):
        return np.zeros(1)

    def f0(self, x):
        return np.zeros(2)

    def f1(self, x):
        return np.zeros((2, 1))


@pytest.fixture
def growth():
    return Growth()


@pytest.fixture
def frozen():
    return Frozen()


def central_diff(fun, z, rel_step=1e-6):
    """Central finite-difference gradient of a scalar function, step ``rel_step * (1 + |z_k|)``."""
    z = np.asarray(z, dtype=float)
    g = np.empty_like(z)
    flat = z.ravel()
    gf = g.ravel()
    for k in range(flat.size):
        h = rel_step * (1.0 + abs(flat[k]))
        zp = flat.copy()
        zm = flat.copy()
        zp[k] += h
        zm[k] -= h
        gf[k] = (fun(zp.reshape(z.shape)) - fun(zm.reshape(z.shape))) / (2 * h)
    return g


def pytest_terminal_summary(terminalreporter):
    # one line per acceptance criterion, in criterion order
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
