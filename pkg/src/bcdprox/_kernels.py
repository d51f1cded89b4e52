"""Compiled inner loops for the built-in models.

Trajectories are handled time-major (``T x d``) here. Each model provides
three row kernels that work on row ``i`` of such arrays:

* ``field(X, i, th, F)`` writes ``f(X[i], th)`` into ``F[i]``,
* ``svjp(X, i, th, V, out)`` writes ``J_x(X[i])^T V[i]`` into ``out[i]``,
* ``pvjp(X, i, th, V, acc)`` adds ``J_th(X[i])^T V[i]`` into ``acc``.

:func:`drivers` specializes the objective, forward prediction and shooting
loops to one model. The multistep recurrence uses the same operation order
as :func:`bcdprox.discretize._combine`, so the residuals of a forward
prediction are exactly zero.
"""

from functools import lru_cache
from types import SimpleNamespace

import numpy as np
from numba import njit

_OPTS = dict(cache=True, nogil=True, inline="always")


# --- Lotka-Volterra ---------------------------------------------------------

@njit(**_OPTS)
def lv_field(X, i, th, F):
    x0, x1 = X[i, 0], X[i, 1]
    F[i, 0] = th[0] * x0 - th[1] * x0 * x1
    F[i, 1] = th[2] * x0 * x1 - th[3] * x1


@njit(**_OPTS)
def lv_svjp(X, i, th, V, out):
    x0, x1, v0, v1 = X[i, 0], X[i, 1], V[i, 0], V[i, 1]
    out[i, 0] = (th[0] - th[1] * x1) * v0 + th[2] * x1 * v1
    out[i, 1] = -th[1] * x0 * v0 + (th[2] * x0 - th[3]) * v1


@njit(**_OPTS)
def lv_pvjp(X, i, th, V, acc):
    x0, x1, v0, v1 = X[i, 0], X[i, 1], V[i, 0], V[i, 1]
    x0x1 = x0 * x1
    acc[0] += x0 * v0
    acc[1] -= x0x1 * v0
    acc[2] += x0x1 * v1
    acc[3] -= x1 * v1


# --- FitzHugh-Nagumo, original parameters ------------------------------------

@njit(**_OPTS)
def fhn_field(X, i, th, F):
    x0, x1 = X[i, 0], X[i, 1]
    F[i, 0] = th[2] * (x0 - x0 * x0 * x0 / 3.0 + x1)
    F[i, 1] = -(x0 - th[0] + th[1] * x1) / th[2]


@njit(**_OPTS)
def fhn_svjp(X, i, th, V, out):
    x0, v0, v1 = X[i, 0], V[i, 0], V[i, 1]
    out[i, 0] = th[2] * (1.0 - x0 * x0) * v0 - v1 / th[2]
    out[i, 1] = th[2] * v0 - th[1] / th[2] * v1


@njit(**_OPTS)
def fhn_pvjp(X, i, th, V, acc):
    x0, x1, v0, v1 = X[i, 0], X[i, 1], V[i, 0], V[i, 1]
    acc[0] += v1 / th[2]
    acc[1] -= x1 * v1 / th[2]
    acc[2] += (x0 - x0 * x0 * x0 / 3.0 + x1) * v0 + (x0 - th[0] + th[1] * x1) * v1 / (th[2] * th[2])


# --- FitzHugh-Nagumo, linear coefficients ------------------------------------

@njit(**_OPTS)
def fhnl_field(X, i, c, F):
    x0, x1 = X[i, 0], X[i, 1]
    F[i, 0] = c[0] * (x0 - x0 * x0 * x0 / 3.0 + x1)
    F[i, 1] = -c[1] * x0 + c[2] - c[3] * x1


@njit(**_OPTS)
def fhnl_svjp(X, i, c, V, out):
    x0, v0, v1 = X[i, 0], V[i, 0], V[i, 1]
    out[i, 0] = c[0] * (1.0 - x0 * x0) * v0 - c[1] * v1
    out[i, 1] = c[0] * v0 - c[3] * v1


@njit(**_OPTS)
def fhnl_pvjp(X, i, c, V, acc):
    x0, x1, v0, v1 = X[i, 0], X[i, 1], V[i, 0], V[i, 1]
    acc[0] += (x0 - x0 * x0 * x0 / 3.0 + x1) * v0
    acc[1] -= x0 * v1
    acc[2] += v1
    acc[3] -= x1 * v1


# --- Rossler -----------------------------------------------------------------

@njit(**_OPTS)
def rossler_field(X, i, th, F):
    x0, x1, x2 = X[i, 0], X[i, 1], X[i, 2]
    F[i, 0] = -x1 - x2
    F[i, 1] = x0 + th[0] * x1
    F[i, 2] = th[1] + x2 * (x0 - th[2])


@njit(**_OPTS)
def rossler_svjp(X, i, th, V, out):
    x0, x2, v0, v1, v2 = X[i, 0], X[i, 2], V[i, 0], V[i, 1], V[i, 2]
    out[i, 0] = v1 + x2 * v2
    out[i, 1] = -v0 + th[0] * v1
    out[i, 2] = -v0 + (x0 - th[2]) * v2


@njit(**_OPTS)
def rossler_pvjp(X, i, th, V, acc):
    acc[0] += X[i, 1] * V[i, 1]
    acc[1] += V[i, 2]
    acc[2] -= X[i, 2] * V[i, 2]


# --- Lorenz-96 -----------------------------------------------------------------

@njit(**_OPTS)
def l96_field(X, i, th, F):
    d = X.shape[1]
    for k in range(d):
        F[i, k] = ((X[i, (k + 1) % d] - X[i, (k - 2 + d) % d]) * X[i, (k - 1 + d) % d] - X[i, k]) + th[0]


@njit(**_OPTS)
def l96_svjp(X, i, th, V, out):
    # state c enters the equations of c+1 (twice), c-1 and c+2
    d = X.shape[1]
    for c in range(d):
        out[i, c] = (V[i, (c - 1 + d) % d] * X[i, (c - 2 + d) % d]
                     - V[i, (c + 2) % d] * X[i, (c + 1) % d]
                     + V[i, (c + 1) % d] * (X[i, (c + 2) % d] - X[i, (c - 1 + d) % d])
                     - V[i, c])


@njit(**_OPTS)
def l96_pvjp(X, i, th, V, acc):
    s = 0.0
    for k in range(X.shape[1]):
        s += V[i, k]
    acc[0] += s


# --- model-specialized drivers ---------------------------------------------------

@njit(**_OPTS)
def _predict_row(Xt, Ft, A, B, gaps, m, j, out):
    # prediction of row j + 1 from rows j, j-1, ..., same order as _combine
    k = min(j + 1, m)
    for c in range(Xt.shape[1]):
        acc_x = A[k - 1, 0] * Xt[j, c]
        acc_f = B[k - 1, 0] * Ft[j, c]
        for l in range(1, k):
            acc_x = acc_x + A[k - 1, l] * Xt[j - l, c]
            acc_f = acc_f + B[k - 1, l] * Ft[j - l, c]
        out[c] = acc_x + gaps[j] * acc_f


@lru_cache(maxsize=None)
def drivers(field, svjp, pvjp):
    """Objective, prediction and shooting loops compiled for one set of row kernels."""

    @njit(nogil=True)
    def field_rows(Xt, th):
        F = np.empty_like(Xt)
        for i in range(Xt.shape[0]):
            field(Xt, i, th, F)
        return F

    @njit(nogil=True)
    def residuals(Xt, th, A, B, gaps, m):
        T, d = Xt.shape
        Ft = field_rows(Xt, th)
        R = np.empty((T - 1, d))
        pred = np.empty(d)
        for j in range(T - 1):
            _predict_row(Xt, Ft, A, B, gaps, m, j, pred)
            for c in range(d):
                R[j, c] = Xt[j + 1, c] - pred[c]
        return R

    @njit(nogil=True)
    def value_and_grads(Xt, th, A, B, gaps, m, want_x, want_theta):
        # unused gradients come back as empty arrays
        T, d = Xt.shape
        Ft = field_rows(Xt, th)
        ramp = min(m - 1, T - 1)
        a = A[m - 1].copy()
        b = B[m - 1].copy()
        # Adams-Bashforth: a = (1, 0, ..., 0), so the state part is the newest state
        # (1 * x = x and x + 0 * y = x exactly for finite values)
        ab = a[0] == 1.0
        for l in range(1, m):
            ab = ab and a[l] == 0.0
        for k in range(1, m):
            ab = ab and A[k - 1, 0] == 1.0
            for l in range(1, k):
                ab = ab and A[k - 1, l] == 0.0
        G = np.empty((T - 1, d))
        E = 0.0
        for j in range(T - 1):
            gj = gaps[j]
            if j < ramp:
                k = j + 1
                for c in range(d):
                    acc_x = A[k - 1, 0] * Xt[j, c]
                    acc_f = B[k - 1, 0] * Ft[j, c]
                    for l in range(1, k):
                        acc_x = acc_x + A[k - 1, l] * Xt[j - l, c]
                        acc_f = acc_f + B[k - 1, l] * Ft[j - l, c]
                    r = Xt[j + 1, c] - (acc_x + gj * acc_f)
                    E += r * r
                    G[j, c] = 2.0 * r
            elif ab:
                for c in range(d):
                    acc_f = b[0] * Ft[j, c]
                    for l in range(1, m):
                        acc_f = acc_f + b[l] * Ft[j - l, c]
                    r = Xt[j + 1, c] - (Xt[j, c] + gj * acc_f)
                    E += r * r
                    G[j, c] = 2.0 * r
            else:
                for c in range(d):
                    acc_x = a[0] * Xt[j, c]
                    acc_f = b[0] * Ft[j, c]
                    for l in range(1, m):
                        acc_x = acc_x + a[l] * Xt[j - l, c]
                        acc_f = acc_f + b[l] * Ft[j - l, c]
                    r = Xt[j + 1, c] - (acc_x + gj * acc_f)
                    E += r * r
                    G[j, c] = 2.0 * r
        # scatter residual cotangents onto states (gX) and field values (gF)
        gX = np.zeros((T, d))
        gF = np.zeros((T, d))
        for j in range(T - 1):
            gj = gaps[j]
            k = j + 1 if j < ramp else m
            for c in range(d):
                g = G[j, c]
                gX[j + 1, c] += g
                if ab:
                    gX[j, c] -= g
                else:
                    for l in range(k):
                        gX[j - l, c] -= A[k - 1, l] * g
                for l in range(k):
                    gF[j - l, c] -= (gj * B[k - 1, l]) * g
        grad_x = np.empty((0, d))
        grad_t = np.empty(0)
        if want_x:
            grad_x = np.empty((T, d))
            for i in range(T):
                svjp(Xt, i, th, gF, grad_x)
            for i in range(T):
                for c in range(d):
                    grad_x[i, c] += gX[i, c]
        if want_theta:
            grad_t = np.zeros(th.shape[0])
            for i in range(T):
                pvjp(Xt, i, th, gF, grad_t)
        return E, grad_x, grad_t

    @njit(nogil=True)
    def forward_predict(x1, th, A, B, gaps, m, bound):
        # also returns the index after which the trajectory left [-bound, bound], or -1
        T = gaps.shape[0] + 1
        d = x1.shape[0]
        Xt = np.empty((T, d))
        Ft = np.empty((T, d))
        Xt[0] = x1
        field(Xt, 0, th, Ft)
        pred = np.empty(d)
        for j in range(T - 1):
            _predict_row(Xt, Ft, A, B, gaps, m, j, pred)
            for c in range(d):
                if not abs(pred[c]) <= bound:  # also catches NaN
                    return Xt, j
            Xt[j + 1] = pred
            field(Xt, j + 1, th, Ft)
        return Xt, -1

    @njit(nogil=True)
    def shooting_value_and_grads(x1, th, Yt, A, B, gaps, m, bound):
        # sum ||y_i - xhat_i||^2 along the forward prediction, with gradients in (x1, th)
        T, d = Yt.shape
        Xt, bad = forward_predict(x1, th, A, B, gaps, m, bound)
        if bad >= 0:
            return np.inf, np.zeros(d), np.zeros(th.shape[0]), False
        # adjoints of the states and of the field values, swept in reverse
        lam_x = np.zeros((T, d))
        lam_f = np.zeros((T, d))
        val = 0.0
        for i in range(T):
            for c in range(d):
                r = Xt[i, c] - Yt[i, c]
                val += r * r
                lam_x[i, c] = 2.0 * r
        g_th = np.zeros(th.shape[0])
        tmp = np.empty((T, d))
        for i in range(T - 1, -1, -1):
            svjp(Xt, i, th, lam_f, tmp)
            pvjp(Xt, i, th, lam_f, g_th)
            for c in range(d):
                lam_x[i, c] += tmp[i, c]
            if i == 0:
                break
            j = i - 1
            k = min(j + 1, m)
            for l in range(k):
                a = A[k - 1, l]
                b = gaps[j] * B[k - 1, l]
                for c in range(d):
                    lam_x[j - l, c] += a * lam_x[i, c]
                    lam_f[j - l, c] += b * lam_x[i, c]
        return val, lam_x[0].copy(), g_th, True

    return SimpleNamespace(field_rows=field_rows, residuals=residuals,
                           value_and_grads=value_and_grads, forward_predict=forward_predict,
                           shooting_value_and_grads=shooting_value_and_grads)
