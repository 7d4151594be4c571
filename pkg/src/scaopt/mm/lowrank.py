"""
Matrix-valued MM solvers: sparse-plus-low-rank completion and dictionary
learning.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from ..core import gram_lambda_max, relative_descent
from ..errors import ConfigurationError, NumericalError
from ..kernels import soft_threshold_vec
from ..penalties import DCPenalty
from .generic import ChainRecord, MMConfig, check_chain


def _svd(X):
    try:
        return np.linalg.svd(X, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc


def singular_value_threshold(Xk: np.ndarray, lam_r: float, eta: float,
                             w: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Minimizer of ``||L - X||_F^2 + lam_r * sum_i (eta - w_i) sigma_i(L)``.

    ``w`` must be nonincreasing along the singular values sorted in
    descending order, which is the case when ``w_i = g_minus'(sigma_i)``
    for a convex ``g_minus``. The solution keeps the singular vectors of
    ``X`` and shrinks its singular values to
    ``(sigma_i + lam_r w_i / 2 - lam_r eta / 2)_+``.
    """
    U, s, Vt = _svd(np.asarray(Xk, dtype=float))
    if w is None:
        w = np.zeros_like(s)
    w = np.asarray(w, dtype=float)
    if w.shape != s.shape:
        raise ConfigurationError("one weight per singular value is required")
    s_new = np.maximum(s + 0.5 * lam_r * w - 0.5 * lam_r * eta, 0.0)
    return (U * s_new) @ Vt


def weighted_sv_objective(L, X, lam_r, eta, w):
    """``||L - X||_F^2 + lam_r sum (eta - w_i) sigma_i(L)``."""
    s = np.linalg.svd(L, compute_uv=False)
    return float(np.sum((L - X) ** 2) + lam_r * np.sum((eta - w) * s))


#%% MATRIX COMPLETION

@dataclass
class MatCompState:
    """
    Iterate and data of the sparse-plus-low-rank completion model
    ``||P_Omega(Y - L - S)||_F^2 + lam_r sum g_r(sigma(L)) + lam_s sum g_s(S)``.
    """

    Y: np.ndarray
    mask: np.ndarray
    lam_r: float
    lam_s: float
    pen_r: DCPenalty
    pen_s: DCPenalty
    L: Optional[np.ndarray] = None
    S: Optional[np.ndarray] = None

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.Y.shape:
            raise ConfigurationError("observation mask must match Y")
        if self.lam_r < 0 or self.lam_s < 0:
            raise ConfigurationError("weights must be nonnegative")
        if self.L is None:
            self.L = np.zeros_like(self.Y)
        if self.S is None:
            self.S = np.zeros_like(self.Y)
        if not (np.all(np.isfinite(self.L)) and np.all(np.isfinite(self.S))):
            raise ConfigurationError("non-finite initial iterate")

    def objective(self, L=None, S=None) -> float:
        L = self.L if L is None else L
        S = self.S if S is None else S
        R = np.where(self.mask, self.Y - L - S, 0.0)
        sv = np.linalg.svd(L, compute_uv=False)
        return float(np.sum(R * R) + self.lam_r * np.sum(self.pen_r.g(sv))
                     + self.lam_s * np.sum(self.pen_s.g(S)))


@dataclass
class MatCompResult:
    L: np.ndarray
    S: np.ndarray
    objective: List[float] = field(default_factory=list)
    chain: List[ChainRecord] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def matcomp_s_update(st: MatCompState) -> tuple:
    """Exact minimizer of the S-surrogate; returns ``(S_new, surrogate)``."""
    Yt = np.where(st.mask, st.Y - st.L, st.S)
    Wk = np.asarray(st.pen_s.dg_minus(st.S))
    eta = st.pen_s.eta
    S_new = soft_threshold_vec(Yt + 0.5 * st.lam_s * Wk, 0.5 * st.lam_s * eta)
    sv_L = np.linalg.svd(st.L, compute_uv=False)
    const = st.lam_r * float(np.sum(st.pen_r.g(sv_L)))
    S_old = st.S

    def surrogate(S):
        return (float(np.sum((Yt - S) ** 2)) + const
                + st.lam_s * float(np.sum(st.pen_s.majorize(S, S_old))))
    return S_new, surrogate


def matcomp_l_update(st: MatCompState) -> tuple:
    """Exact minimizer of the L-surrogate; returns ``(L_new, surrogate)``."""
    X = np.where(st.mask, st.Y - st.S, st.L)
    sv_old = np.linalg.svd(st.L, compute_uv=False)
    w = np.where(sv_old > 0, np.asarray(st.pen_r.dg_minus(sv_old)), 0.0)
    eta = st.pen_r.eta
    L_new = singular_value_threshold(X, st.lam_r, eta, w)
    const = st.lam_s * float(np.sum(st.pen_s.g(st.S)))
    gm_old = np.asarray(st.pen_r.g_minus(sv_old))

    def surrogate(L):
        s = np.linalg.svd(L, compute_uv=False)
        pen = np.sum(eta * s - gm_old - w * (s - sv_old))
        return float(np.sum((X - L) ** 2)) + st.lam_r * float(pen) + const
    return L_new, surrogate


def matcomp_block_mm(state: MatCompState, config: Optional[MMConfig] = None,
                     update_S: bool = True) -> MatCompResult:
    """
    Alternate exact S- and L-surrogate minimizations.

    Both surrogates majorize the objective through the observation mask
    (the unobserved entries are filled with the current iterate) and
    through the linearized concave parts of the penalties. With
    ``update_S=False`` the sparse component stays fixed.
    """
    cfg = config or MMConfig()
    st = state
    v = st.objective()
    res = MatCompResult(L=st.L, S=st.S, objective=[v])
    for k in range(cfg.max_iters):
        v_start = v
        L_start, S_start = st.L.copy(), st.S.copy()
        steps = ("S", "L") if update_S else ("L",)
        for name in steps:
            if name == "S":
                new, sur = matcomp_s_update(st)
                old = st.S
                v_new = st.objective(S=new)
            else:
                new, sur = matcomp_l_update(st)
                old = st.L
                v_new = st.objective(L=new)
            rec = ChainRecord(v_new, sur(new), sur(old), v)
            res.chain.append(rec)
            if cfg.check_chain:
                check_chain(rec, cfg.chain_tol, where=f"matrix completion {name}-update")
            if name == "S":
                st.S = new
            else:
                st.L = new
            v = v_new
        res.objective.append(v)
        res.iterations = k + 1
        dx = np.sqrt(np.sum((st.L - L_start) ** 2) + np.sum((st.S - S_start) ** 2))
        if relative_descent(v_start, v) < cfg.tol_relative_descent or dx < cfg.tol_iterate_delta:
            res.converged = True
            break
    res.L, res.S = st.L, st.S
    return res


#%% DICTIONARY LEARNING

@dataclass
class DictConstraint:
    """
    Feasible set for the dictionary.

    ``kind`` is ``frobenius_ball`` (``||D||_F^2 <= alpha``),
    ``per_column_ball`` (``||d_i||^2 <= alpha_i``) or ``nonneg``.
    """

    kind: str
    alpha: Union[float, Sequence[float], None] = None

    def __post_init__(self):
        if self.kind not in ("frobenius_ball", "per_column_ball", "nonneg"):
            raise ConfigurationError(f"unknown dictionary constraint {self.kind!r}")
        if self.kind != "nonneg":
            if self.alpha is None or np.any(np.asarray(self.alpha) <= 0):
                raise ConfigurationError("ball constraints need positive alpha")

    def project(self, D):
        if self.kind == "nonneg":
            return np.maximum(D, 0.0)
        if self.kind == "frobenius_ball":
            nrm2 = float(np.sum(D * D))
            if nrm2 <= self.alpha:
                return D
            return D * np.sqrt(self.alpha / nrm2)
        a = np.broadcast_to(np.asarray(self.alpha, dtype=float), (D.shape[1],))
        n2 = np.sum(D * D, axis=0)
        scale = np.where(n2 > a, np.sqrt(a / np.where(n2 > 0, n2, 1.0)), 1.0)
        return D * scale

    def feasible(self, D, tol=1e-10):
        if self.kind == "nonneg":
            return bool(np.all(D >= -tol))
        if self.kind == "frobenius_ball":
            return float(np.sum(D * D)) <= self.alpha * (1 + tol) + tol
        a = np.broadcast_to(np.asarray(self.alpha, dtype=float), (D.shape[1],))
        return bool(np.all(np.sum(D * D, axis=0) <= a * (1 + tol) + tol))


@dataclass
class DictResult:
    D: np.ndarray
    X: np.ndarray
    objective: List[float] = field(default_factory=list)
    chain: List[ChainRecord] = field(default_factory=list)
    d_steps: List[str] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def dl_objective(Y, D, X, lam_s, penalty):
    R = Y - D @ X
    return float(np.sum(R * R) + lam_s * np.sum(penalty.g(X)))


def dict_update_exact_frobenius(Y, X, alpha, tol=1e-10, max_bisect=200):
    """
    Solve ``min ||Y - D X||_F^2`` s.t. ``||D||_F^2 <= alpha``.

    The multiplier ``mu`` of the ball constraint gives
    ``D(mu) = Y X^T (X X^T + mu I)^{-1}``. If ``mu = 0`` is feasible it is
    optimal; otherwise ``h(mu) = alpha - ||D(mu)||_F^2`` is increasing and
    its root is bracketed and bisected until ``|h| <= tol``.

    Returns
    -------
    D : ndarray or None
        ``None`` when ``X X^T`` is singular and the unconstrained solution
        would be needed (the caller then takes a projected step).
    mu : float
    """
    C = Y @ X.T
    evals, Q = np.linalg.eigh(X @ X.T)
    evals = np.maximum(evals, 0.0)
    CQ = C @ Q
    col2 = np.sum(CQ * CQ, axis=0)
    singular = evals[0] <= 1e-12 * max(evals[-1], 1.0)

    def norm2(mu):
        den = (evals + mu) ** 2
        return float(np.sum(np.where(den > 0, col2 / np.where(den > 0, den, 1.0), 0.0)))

    def D_of(mu):
        return (CQ / (evals + mu)) @ Q.T

    if not singular and norm2(0.0) <= alpha:
        return D_of(0.0), 0.0
    if singular:
        null = evals <= 1e-12 * max(evals[-1], 1.0)
        if np.all(col2[null] <= 1e-20) and norm2(0.0) <= alpha:
            return None, 0.0
    lo, hi = 0.0, max(1.0, evals[-1])
    while norm2(hi) > alpha:
        hi *= 2.0
    mu = hi
    for _ in range(max_bisect):
        mu = 0.5 * (lo + hi)
        h = alpha - norm2(mu)
        if abs(h) <= tol:
            break
        if h < 0:
            lo = mu
        else:
            hi = mu
    else:
        mu = hi
    return D_of(mu), mu


def dictionary_learning_mm(Y: np.ndarray, r: int, lam_s: float,
                           penalty: DCPenalty, constraint: DictConstraint,
                           config: Optional[MMConfig] = None,
                           D0: Optional[np.ndarray] = None,
                           X0: Optional[np.ndarray] = None,
                           seed: int = 0, update_D: bool = True,
                           update_X: bool = True) -> DictResult:
    """
    Block MM for ``min ||Y - D X||_F^2 + lam_s sum g(X_ij)`` with ``D`` in a
    convex set.

    Each iteration updates ``D`` (exactly for the Frobenius ball, by a
    majorized projected-gradient step otherwise) and then ``X`` by one
    outer sparse least-squares MM step applied to all columns at once.
    """
    cfg = config or MMConfig()
    Y = np.asarray(Y, dtype=float)
    m, t = Y.shape
    if not (1 <= r <= min(m, t)):
        raise ConfigurationError("rank r must satisfy 1 <= r <= min(m, t)")
    rng = np.random.default_rng(seed)
    D = constraint.project(rng.standard_normal((m, r))) if D0 is None else np.array(D0, dtype=float)
    X = rng.standard_normal((r, t)) if X0 is None else np.array(X0, dtype=float)
    v = dl_objective(Y, D, X, lam_s, penalty)
    res = DictResult(D=D, X=X, objective=[v])
    for k in range(cfg.max_iters):
        v_start = v
        D_start, X_start = D.copy(), X.copy()
        if update_D:
            D_new, kind = _dict_step(Y, D, X, constraint)
            pen = lam_s * float(np.sum(penalty.g(X)))
            if kind == "exact":
                def sur(Dm):
                    return dl_objective(Y, Dm, X, 0.0, penalty) + pen
            else:
                Lc = gram_lambda_max(X.T, method="exact")
                G = D @ (X @ X.T) - Y @ X.T
                def sur(Dm, D_old=D, G=G, Lc=Lc):
                    d = Dm - D_old
                    return v + 2.0 * float(np.sum(G * d)) + Lc * float(np.sum(d * d))
            v_new = dl_objective(Y, D_new, X, lam_s, penalty)
            rec = ChainRecord(v_new, sur(D_new), sur(D), v)
            res.chain.append(rec)
            res.d_steps.append(kind)
            if cfg.check_chain:
                check_chain(rec, cfg.chain_tol, where="dictionary D-update")
            D, v = D_new, v_new
        if update_X:
            X_new, sur = _x_step(Y, D, X, lam_s, penalty, cfg)
            v_new = dl_objective(Y, D, X_new, lam_s, penalty)
            rec = ChainRecord(v_new, sur(X_new), sur(X), v)
            res.chain.append(rec)
            if cfg.check_chain:
                check_chain(rec, cfg.chain_tol, where="dictionary X-update")
            X, v = X_new, v_new
        res.objective.append(v)
        res.iterations = k + 1
        dx = np.sqrt(np.sum((D - D_start) ** 2) + np.sum((X - X_start) ** 2))
        if relative_descent(v_start, v) < cfg.tol_relative_descent or dx < cfg.tol_iterate_delta:
            res.converged = True
            break
    res.D, res.X = D, X
    return res


def _dict_step(Y, D, X, constraint):
    if constraint.kind == "frobenius_ball":
        D_new, _ = dict_update_exact_frobenius(Y, X, float(constraint.alpha))
        if D_new is not None:
            return D_new, "exact"
    Lc = gram_lambda_max(X.T, method="exact")
    if Lc <= 0:
        return D.copy(), "projected"
    step = D - (D @ (X @ X.T) - Y @ X.T) / Lc
    return constraint.project(step), "projected"


def _x_step(Y, D, X, lam_s, penalty, cfg):
    """One outer DC-majorized MM step on every column, solved by soft-thresholding."""
    Lx = 2.0 * gram_lambda_max(D, method="exact")
    eta = penalty.eta
    shift = np.asarray(penalty.dg_minus(X))
    DtD, DtY = D.T @ D, D.T @ Y
    X_old = X
    if Lx <= 0:
        U = np.zeros_like(X)
    else:
        U = X.copy()
        for _ in range(cfg.inner_max_iters):
            B = U - (2.0 / Lx) * (DtD @ U - DtY) + (lam_s / Lx) * shift
            U_new = soft_threshold_vec(B, lam_s * eta / Lx)
            done = np.linalg.norm(U_new - U) <= cfg.inner_tol
            U = U_new
            if done:
                break

    def sur(Xm):
        R = Y - D @ Xm
        return float(np.sum(R * R)) + lam_s * float(np.sum(penalty.majorize(Xm, X_old)))
    return U, sur
