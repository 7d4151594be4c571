"""
Pure-Python reference implementations of the hot loops.

These mirror ``_kernels.pyx`` one-for-one and are used when the compiled
extension is unavailable or when ``SCAOPT_KERNELS=python`` is set.
"""

import numpy as np


BACKEND = "python"


def soft_threshold_vec(x, alpha):
    """Component-wise ``sign(x) max(|x| - alpha, 0)``; ``alpha`` scalar or array."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - alpha, 0.0)


def lasso_cyclic_sweep(A, x, r, idx, tau, colsq, lam, gamma):
    """
    Gauss-Seidel pass of damped scalar LASSO best responses.

    ``x`` and the residual ``r = z - A x`` are updated in place, in the
    order given by ``idx``.
    """
    for i in idx:
        a = A[:, i]
        xi = x[i]
        c = a @ r + (colsq[i] + tau[i]) * xi
        xhat = np.sign(c) * max(abs(c) - lam, 0.0) / (tau[i] + colsq[i])
        d = gamma * (xhat - xi)
        if d != 0.0:
            x[i] = xi + d
            r -= d * a


def _sigmoid_neg(u):
    # 1 / (1 + exp(u)) without overflow
    if u >= 0:
        e = np.exp(-u)
        return e / (1.0 + e)
    return 1.0 / (1.0 + np.exp(u))


def logreg_cyclic_sweep(Z, w, x, margin, idx, tau, lam, gamma, scale):
    """
    Gauss-Seidel pass of damped second-order logistic best responses.

    ``margin = w * (Z x)`` is updated in place together with ``x``.
    """
    q = Z.shape[0]
    for i in idx:
        col = Z[:, i]
        g = 0.0
        h = 0.0
        for j in range(q):
            s = _sigmoid_neg(margin[j])
            g -= w[j] * col[j] * s
            h += col[j] * col[j] * s * (1.0 - s)
        g *= scale
        h *= scale
        t = 1.0 / (tau[i] + h)
        v = x[i] - t * g
        xhat = np.sign(v) * max(abs(v) - lam * t, 0.0)
        d = gamma * (xhat - x[i])
        if d != 0.0:
            x[i] += d
            margin += d * w * col
