"""Error measures between clean, estimated and predicted trajectories."""

import numpy as np

from bcdprox.errors import ContractError
from bcdprox.objective import _values


def _pair(a, b):
    a = _values(a) if a is not None else None
    b = _values(b) if b is not None else None
    if a is not None and b is not None and a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def prediction_error(X_true, X_pred):
    """Frobenius norm of ``X_true - X_pred``; ``inf`` when the prediction is missing (diverged)."""
    X, Xh = _pair(X_true, X_pred)
    if Xh is None or not np.all(np.isfinite(Xh)):
        return float("inf")
    return float(np.sqrt(np.sum((X - Xh) ** 2)))


def parameter_error(theta_true, theta_est):
    a = np.asarray(theta_true, dtype=float)
    b = np.asarray(theta_est, dtype=float)
    if a.shape != b.shape:
        raise ContractError("parameter vectors differ in length")
    return np.abs(a - b)


def estimation_error(X_true, X_est):
    """Mean over time points of the Euclidean distance between true and estimated states."""
    X, Xe = _pair(X_true, X_est)
    if Xe is None or not np.all(np.isfinite(Xe)):
        return float("inf")
    return float(np.mean(np.sqrt(np.sum((X - Xe) ** 2, axis=0))))
