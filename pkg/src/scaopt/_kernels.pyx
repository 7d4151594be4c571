# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""
Compiled hot loops: vector soft-thresholding and the Gauss-Seidel sweeps
used by the parallel-cyclic engines on LASSO and logistic instances.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()

BACKEND = "cython"


cdef inline double _st(double v, double a) nogil:
    if v > a:
        return v - a
    if v < -a:
        return v + a
    return 0.0


def soft_threshold_vec(x, alpha):
    """Component-wise ``sign(x) max(|x| - alpha, 0)``; ``alpha`` scalar or array."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xv.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] av
    cdef double a
    if np.ndim(alpha) == 0:
        a = float(alpha)
        for i in range(n):
            out[i] = _st(xv[i], a)
    else:
        av = np.ascontiguousarray(np.broadcast_to(alpha, np.shape(x)), dtype=np.float64).ravel()
        for i in range(n):
            out[i] = _st(xv[i], av[i])
    return out.reshape(np.shape(x))


def lasso_cyclic_sweep(double[::1, :] A, double[::1] x, double[::1] r,
                       long[::1] idx, double[::1] tau, double[::1] colsq,
                       double lam, double gamma):
    """Gauss-Seidel pass of damped scalar LASSO best responses (in place)."""
    cdef Py_ssize_t q = A.shape[0], n = idx.shape[0], k, j, i
    cdef double c, xhat, d, xi
    with nogil:
        for k in range(n):
            i = idx[k]
            xi = x[i]
            c = 0.0
            for j in range(q):
                c += A[j, i] * r[j]
            c += (colsq[i] + tau[i]) * xi
            xhat = _st(c, lam) / (tau[i] + colsq[i])
            d = gamma * (xhat - xi)
            if d != 0.0:
                x[i] = xi + d
                for j in range(q):
                    r[j] -= d * A[j, i]


cdef inline double _sigmoid_neg(double u) nogil:
    cdef double e
    if u >= 0:
        e = exp(-u)
        return e / (1.0 + e)
    return 1.0 / (1.0 + exp(u))


def logreg_cyclic_sweep(double[::1, :] Z, double[::1] w, double[::1] x,
                        double[::1] margin, long[::1] idx, double[::1] tau,
                        double lam, double gamma, double scale):
    """Gauss-Seidel pass of damped second-order logistic best responses (in place)."""
    cdef Py_ssize_t q = Z.shape[0], n = idx.shape[0], k, j, i
    cdef double g, h, s, t, v, xhat, d
    with nogil:
        for k in range(n):
            i = idx[k]
            g = 0.0
            h = 0.0
            for j in range(q):
                s = _sigmoid_neg(margin[j])
                g -= w[j] * Z[j, i] * s
                h += Z[j, i] * Z[j, i] * s * (1.0 - s)
            g *= scale
            h *= scale
            t = 1.0 / (tau[i] + h)
            v = x[i] - t * g
            xhat = _st(v, lam * t)
            d = gamma * (xhat - x[i])
            if d != 0.0:
                x[i] += d
                for j in range(q):
                    margin[j] += d * w[j] * Z[j, i]
