"""
MM solvers for least-squares models: nonconvex sparse least squares and
nonnegative least squares.

Objectives use the unscaled residual ``||z - A x||^2``, whose gradient is
``2 A^T (A x - z)`` with Lipschitz constant ``2 lambda_max(A^T A)``.
"""

from __future__ import annotations

from typing import Optional, Union

import numpy as np

from ..core import (MeritReport, TOL_FEASIBILITY, gram_lambda_max,
                    lipschitz_least_squares)
from ..errors import ConfigurationError, NumericalError
from ..kernels import soft_threshold_vec
from ..penalties import DCPenalty
from .generic import ChainRecord, MMConfig, MMResult, _stop, check_chain


def _lipschitz(A, lipschitz):
    if isinstance(lipschitz, str):
        return lipschitz_least_squares(A, method=lipschitz)
    return float(lipschitz)


def sparse_ls_objective(A, z, lam, penalty: DCPenalty, x) -> float:
    r = z - A @ x
    return float(r @ r + lam * np.sum(penalty.g(x)))


class _SparseLSModel:
    """Surrogate pieces for ``||z - A x||^2 + lam sum g(x_i)``."""

    def __init__(self, A, z, lam, penalty, majorizer, L):
        self.A, self.z, self.lam, self.pen = A, z, lam, penalty
        self.majorizer = majorizer
        self.L = L
        self.Atz = A.T @ z

    def V(self, x):
        return sparse_ls_objective(self.A, self.z, self.lam, self.pen, x)

    def weights(self, y):
        """Per-coordinate l1 weight and linear shift of the penalty majorizer."""
        if self.majorizer == "dc":
            return (np.full_like(y, self.pen.eta), np.asarray(self.pen.dg_minus(y)))
        return (np.asarray(self.pen.adhoc_weight(y)), np.zeros_like(y))

    def pen_major(self, x, y):
        if self.majorizer == "dc":
            return float(np.sum(self.pen.majorize(x, y)))
        return float(np.sum(self.pen.majorize_adhoc(x, y)))

    def grad(self, x):
        return 2.0 * (self.A.T @ (self.A @ x) - self.Atz)

    def inner_step(self, x, w, shift):
        """One soft-thresholding step on the penalty-majorized problem."""
        b = x - (2.0 / self.L) * (self.A.T @ (self.A @ x) - self.Atz) \
            + (self.lam / self.L) * shift
        if not np.all(np.isfinite(b)):
            raise NumericalError("non-finite soft-threshold argument")
        return soft_threshold_vec(b, self.lam * w / self.L)


def sparse_ls_mm(A: np.ndarray, z: np.ndarray, lam: float, penalty: DCPenalty,
                 variant: str = "double_loop", config: Optional[MMConfig] = None,
                 x0: Optional[np.ndarray] = None,
                 lipschitz: Union[str, float] = "exact",
                 majorizer: str = "dc") -> MMResult:
    """
    MM for ``min ||z - A x||^2 + lam * sum_i g(x_i)``.

    The outer surrogate replaces ``g`` by its linearized DC majorizer
    around ``x^k`` (or the tailored weighted-l1 majorizer when
    ``majorizer="adhoc"``). The double-loop variant solves this convex
    model by proximal-gradient (soft-thresholding) inner iterations started
    at ``x^k``; the one-step variant performs a single such iteration,
    which is itself the exact minimizer of a quadratic-plus-l1 surrogate.

    Parameters
    ----------
    A, z : ndarray
        Design matrix ``(q, m)`` and observations ``(q,)``.
    lam : float
        Regularization weight, positive.
    penalty : DCPenalty
    variant : {"double_loop", "one_step"}
    config : MMConfig, optional
        ``inner_tol`` and ``inner_max_iters`` govern the inner loop.
    x0 : ndarray, optional
        Starting point, zero by default.
    lipschitz : {"exact", "power"} or float
        How ``L = 2 lambda_max(A^T A)`` is obtained.
    majorizer : {"dc", "adhoc"}

    Returns
    -------
    MMResult
    """
    if lam <= 0:
        raise ConfigurationError("lam must be positive")
    if variant not in ("double_loop", "one_step"):
        raise ConfigurationError(f"unknown variant {variant!r}")
    if majorizer not in ("dc", "adhoc"):
        raise ConfigurationError(f"unknown majorizer {majorizer!r}")
    cfg = config or MMConfig()
    A = np.asarray(A, dtype=float)
    z = np.asarray(z, dtype=float)
    L = _lipschitz(A, lipschitz)
    if L <= 0:
        raise ConfigurationError("zero design matrix")
    mdl = _SparseLSModel(A, z, lam, penalty, majorizer, L)
    x = np.zeros(A.shape[1]) if x0 is None else np.array(x0, dtype=float)
    v = mdl.V(x)
    res = MMResult(x=x, objective=[v])
    for k in range(cfg.max_iters):
        w, shift = mdl.weights(x)
        if variant == "one_step":
            x_new = mdl.inner_step(x, w, shift)
            g = mdl.grad(x)
            r = z - A @ x
            base = float(r @ r)

            def S(u, y=x, g=g, base=base):
                d = u - y
                return base + g @ d + 0.5 * L * (d @ d) + lam * mdl.pen_major(u, y)
        else:
            u = x
            for _ in range(cfg.inner_max_iters):
                u_new = mdl.inner_step(u, w, shift)
                done = np.linalg.norm(u_new - u) <= cfg.inner_tol
                u = u_new
                if done:
                    break
            x_new = u

            def S(u, y=x):
                r = z - A @ u
                return float(r @ r) + lam * mdl.pen_major(u, y)
        v_new = mdl.V(x_new)
        rec = ChainRecord(v_new, S(x_new), S(x), v)
        res.chain.append(rec)
        if cfg.check_chain:
            check_chain(rec, cfg.chain_tol, where=f"sparse LS ({variant})")
        rd, dx, stop = _stop(v, v_new, x, x_new, cfg)
        res.reports.append(MeritReport(v_new, dx, rd, dx))
        x, v = x_new, v_new
        res.objective.append(v)
        res.iterations = k + 1
        if stop:
            res.converged = True
            break
    res.x = x
    return res


#%% NONNEGATIVE LEAST SQUARES

def nnls_mm(A: np.ndarray, z: np.ndarray, variant: str = "grad_proj",
            config: Optional[MMConfig] = None, x0: Optional[np.ndarray] = None,
            lam: Optional[float] = None) -> MMResult:
    """
    MM for ``min ||z - A x||^2`` subject to ``x >= 0``.

    ``grad_proj`` majorizes with ``lam ||x - y||^2`` (``lam >=
    lambda_max(A^T A)``) and gives the projected gradient step
    ``[y - (A^T A y - A^T z) / lam]_+``. ``multiplicative`` uses the
    separable bound ``x^T Q x <= sum_i (Q y)_i x_i^2 / y_i`` valid for
    entrywise nonnegative ``Q = A^T A`` and positive ``y``, giving
    ``x = (A^T z / A^T A y) * y``.

    The multiplicative variant requires ``A >= 0`` without zero columns,
    ``z >= 0``, ``z != 0`` and a positive start.
    """
    if variant not in ("grad_proj", "multiplicative"):
        raise ConfigurationError(f"unknown variant {variant!r}")
    cfg = config or MMConfig()
    A = np.asarray(A, dtype=float)
    z = np.asarray(z, dtype=float)
    m = A.shape[1]
    Q = A.T @ A
    Atz = A.T @ z
    zz = float(z @ z)

    def V(x):
        r = z - A @ x
        return float(r @ r)

    if variant == "multiplicative":
        if np.any(A < 0) or np.any(~A.any(axis=0)):
            raise ConfigurationError("multiplicative update needs A >= 0 without zero columns")
        if np.any(z < 0) or not np.any(z > 0):
            raise ConfigurationError("multiplicative update needs z >= 0, z != 0")
        x = np.ones(m) if x0 is None else np.array(x0, dtype=float)
        if np.any(x <= 0):
            raise ConfigurationError("multiplicative update needs x0 > 0")
    else:
        if lam is None:
            lam = gram_lambda_max(A, method="exact")
        x = np.zeros(m) if x0 is None else np.maximum(np.array(x0, dtype=float), 0.0)

    v = V(x)
    res = MMResult(x=x, objective=[v])
    for k in range(cfg.max_iters):
        if variant == "grad_proj":
            g = Q @ x - Atz
            x_new = np.maximum(x - g / lam, 0.0)

            def S(u, y=x, g=g, vy=v):
                d = u - y
                return vy + 2.0 * (g @ d) + lam * (d @ d)
        else:
            Qx = Q @ x
            pos = x > 0
            x_new = np.zeros(m)
            x_new[pos] = Atz[pos] / Qx[pos] * x[pos]
            coef = np.zeros(m)
            coef[pos] = Qx[pos] / x[pos]

            def S(u, coef=coef):
                return zz - 2.0 * (Atz @ u) + float(coef @ (u * u))
        if np.any(x_new < -TOL_FEASIBILITY):
            raise NumericalError("negative NNLS iterate")
        v_new = V(x_new)
        rec = ChainRecord(v_new, S(x_new), S(x), v)
        res.chain.append(rec)
        if cfg.check_chain:
            check_chain(rec, cfg.chain_tol, where=f"NNLS ({variant})")
        rd, dx, stop = _stop(v, v_new, x, x_new, cfg)
        res.reports.append(MeritReport(v_new, dx, rd, dx))
        x, v = x_new, v_new
        res.objective.append(v)
        res.iterations = k + 1
        if stop:
            res.converged = True
            break
    res.x = x
    return res
