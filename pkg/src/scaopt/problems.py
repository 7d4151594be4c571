"""
Problem instances with closed-form best responses and generators.

LASSO, l1-regularized logistic regression, group LASSO, robust Huber
regression split over agents, and multi-target localization from squared
range measurements. Instances are immutable after construction; the solve
helpers are pure functions of their inputs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .core import (BlockPartition, CompositeProblem, block_soft_threshold,
                   gram_lambda_max, project_box)
from .errors import ConfigurationError, DomainError, NumericalError
from .flexa import SurrogateFamily, l1_stationarity_merit
from .kernels import soft_threshold_vec


#%% LASSO

@dataclass(eq=False)
class LassoInstance:
    """
    ``V(x) = 0.5 ||z - A x||^2 + lam ||x||_1``.

    Parameters
    ----------
    A : ndarray, shape (q, m)
    z : ndarray, shape (q,)
    lam : float
        Positive regularization weight.
    x_star, v_star : optional
        Known optimum and optimal value.
    """

    A: np.ndarray
    z: np.ndarray
    lam: float
    x_star: Optional[np.ndarray] = None
    v_star: Optional[float] = None

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.A.ndim != 2 or self.z.shape != (self.A.shape[0],):
            raise ConfigurationError("A must be (q, m) and z (q,)")
        if not self.lam > 0:
            raise ConfigurationError("lam must be positive")
        self.lam = float(self.lam)

    @property
    def m(self):
        return self.A.shape[1]

    def value(self, x):
        r = self.z - self.A @ x
        return 0.5 * float(r @ r) + self.lam * float(np.abs(x).sum())

    def grad(self, x):
        """Gradient of the smooth part."""
        return self.A.T @ (self.A @ x - self.z)

    def re(self, x):
        """Relative error ``(V(x) - V*) / V*``."""
        if self.v_star is None:
            raise ConfigurationError("optimal value unknown")
        return (self.value(x) - self.v_star) / self.v_star

    def prox_residual(self, x):
        """``||S_lam(x - grad(x)) - x||``, zero exactly at the optimum."""
        return float(np.linalg.norm(soft_threshold_vec(x - self.grad(x), self.lam) - x))

    def composite(self, partition: Optional[BlockPartition] = None) -> CompositeProblem:
        lam = self.lam
        return CompositeProblem(
            dim=self.m,
            eval_F=lambda x: 0.5 * float(np.sum((self.z - self.A @ x) ** 2)),
            grad_F=self.grad,
            eval_G=lambda x: lam * float(np.abs(x).sum()),
            prox_G=lambda v, t, block=None: soft_threshold_vec(v, lam * t),
            lipschitz_hint=gram_lambda_max(self.A, method="exact"),
            partition=partition or BlockPartition.scalar(self.m))

    def surrogates(self, tau) -> SurrogateFamily:
        """Exact scalar best responses (the model keeps the block quadratic)."""
        colsq = np.einsum("ij,ij->j", self.A, self.A)
        fam = None

        def prepare(y):
            return self.z - self.A @ y

        def best_response(i, y, ctx=None):
            r = ctx if ctx is not None else self.z - self.A @ y
            t = fam.tau_of(i)
            c = self.A[:, i] @ r + (colsq[i] + t) * y[i]
            return soft_threshold_vec(np.array([c]), self.lam) / (t + colsq[i])

        def value(i, u, y):
            x = y.copy()
            x[i] = u[0]
            r = self.z - self.A @ x
            return 0.5 * float(r @ r) + 0.5 * fam.tau_of(i) * float((u[0] - y[i]) ** 2)

        def gradient(i, u, y):
            x = y.copy()
            x[i] = u[0]
            return np.array([self.A[:, i] @ (self.A @ x - self.z)
                             + fam.tau_of(i) * (u[0] - y[i])])

        fam = SurrogateFamily(best_response, np.broadcast_to(
            np.asarray(tau, dtype=float), (self.m,)).copy(), "block_convex",
            value, gradient, prepare)
        return fam


def lasso_best_response_scalar(inst: LassoInstance, i: int, x: np.ndarray,
                               tau_i: float) -> float:
    """
    ``S_lam(a_i^T r_i + tau_i x_i) / (tau_i + ||a_i||^2)`` with
    ``r_i = z - sum_{j != i} a_j x_j``.
    """
    a = inst.A[:, i]
    colsq = float(a @ a)
    if colsq + tau_i <= 0:
        raise DomainError(f"block {i} is degenerate: zero column and tau = 0")
    r_i = inst.z - inst.A @ x + a * x[i]
    c = float(a @ r_i) + tau_i * x[i]
    return float(np.sign(c) * max(abs(c) - inst.lam, 0.0) / (tau_i + colsq))


def generate_lasso(m: int, q: int, sparsity_fraction: float, seed: int = 0,
                   lam: float = 1.0, ratio: float = 0.3) -> LassoInstance:
    """
    LASSO instance with a known optimum.

    The residual at the optimum is ``r* = rho r_hat`` with ``rho = lam /
    ratio``. Every column is unit norm with ``a_j^T r_hat = t_j``, where
    ``t_j = lam sign(x*_j) / rho`` on the support and ``|t_j| <= 0.9 lam /
    rho`` off it, so the subgradient condition holds at ``x*`` with strict
    complementarity. Then ``z = A x* + r*``.

    Parameters
    ----------
    m, q : int
        Variables and observations.
    sparsity_fraction : float
        Fraction of nonzero entries of ``x*`` in (0, 1].
    seed : int
    lam : float
    ratio : float
        ``lam / ||r*||``, in (0, 1).
    """
    if not 0 < sparsity_fraction <= 1:
        raise ConfigurationError("sparsity_fraction must lie in (0, 1]")
    if not 0 < ratio < 1 or q < 2:
        raise ConfigurationError("need 0 < ratio < 1 and q >= 2")
    rng = np.random.default_rng(seed)
    k = max(1, int(round(sparsity_fraction * m)))
    support = np.sort(rng.choice(m, size=k, replace=False))
    signs = rng.choice([-1.0, 1.0], size=k)
    x_star = np.zeros(m)
    x_star[support] = signs * (1.0 + rng.random(k))
    rho = lam / ratio
    r_hat = rng.standard_normal(q)
    r_hat /= np.linalg.norm(r_hat)
    t = rng.uniform(-0.9, 0.9, size=m) * ratio
    t[support] = signs * ratio
    U = rng.standard_normal((q, m))
    U -= np.outer(r_hat, r_hat @ U)
    U /= np.linalg.norm(U, axis=0)
    A = U * np.sqrt(1.0 - t ** 2) + np.outer(r_hat, t)
    r_star = rho * r_hat
    z = A @ x_star + r_star
    v_star = 0.5 * rho ** 2 + lam * float(np.abs(x_star).sum())
    inst = LassoInstance(A, z, lam, x_star, v_star)
    if inst.prox_residual(x_star) > 1e-8:
        raise NumericalError("certificate construction failed")
    return inst


#%% LOGISTIC REGRESSION

@dataclass(eq=False)
class LogRegInstance:
    """
    ``scale * sum_i log(1 + exp(-w_i z_i^T x)) + lam ||x||_1``.

    ``scale`` is ``1`` or ``1/q`` when ``normalize`` is set.
    """

    Z: np.ndarray
    w: np.ndarray
    lam: float = 0.0
    normalize: bool = False

    def __post_init__(self):
        self.Z = np.asarray(self.Z, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        if self.Z.ndim != 2 or self.w.shape != (self.Z.shape[0],):
            raise ConfigurationError("Z must be (q, m) and w (q,)")
        if not np.all(np.abs(self.w) == 1.0):
            raise ConfigurationError("labels must be +1 or -1")
        if self.lam < 0:
            raise ConfigurationError("lam must be nonnegative")

    @property
    def scale(self):
        return 1.0 / self.Z.shape[0] if self.normalize else 1.0

    @property
    def m(self):
        return self.Z.shape[1]

    def margin(self, x):
        return self.w * (self.Z @ x)

    def loss(self, x):
        v = self.scale * float(np.logaddexp(0.0, -self.margin(x)).sum())
        if not np.isfinite(v):
            raise NumericalError("non-finite logistic loss")
        return v

    def value(self, x):
        return self.loss(x) + self.lam * float(np.abs(x).sum())

    def _s(self, x):
        m = self.margin(x)
        return np.exp(-np.logaddexp(0.0, m))  # 1 / (1 + e^m)

    def grad(self, x):
        return -self.scale * (self.Z.T @ (self.w * self._s(x)))

    def hess_diag(self, x):
        s = self._s(x)
        return self.scale * ((self.Z ** 2).T @ (s * (1.0 - s)))

    def merit(self, x):
        """``||grad F - Pi_[-lam, lam](grad F - x)||_inf``."""
        return float(np.abs(l1_stationarity_merit(self.grad(x), x, self.lam)).max())

    def composite(self, partition: Optional[BlockPartition] = None) -> CompositeProblem:
        lam = self.lam
        L = 0.25 * self.scale * float(np.linalg.norm(self.Z, 2) ** 2)
        return CompositeProblem(
            dim=self.m, eval_F=self.loss, grad_F=self.grad,
            eval_G=lambda x: lam * float(np.abs(x).sum()),
            prox_G=lambda v, t, block=None: soft_threshold_vec(v, lam * t),
            lipschitz_hint=L, partition=partition or BlockPartition.scalar(self.m))

    def surrogates(self, tau) -> SurrogateFamily:
        """Second-order scalar models with exact Hessian diagonal."""
        fam = None

        def prepare(y):
            return self.grad(y), self.hess_diag(y)

        def best_response(i, y, ctx=None):
            g, h = ctx if ctx is not None else prepare(y)
            t = 1.0 / (fam.tau_of(i) + h[i])
            return soft_threshold_vec(np.array([y[i] - t * g[i]]), self.lam * t)

        def value(i, u, y):
            g, h = prepare(y)
            d = u[0] - y[i]
            return float(g[i] * d + 0.5 * (h[i] + fam.tau_of(i)) * d * d)

        def gradient(i, u, y):
            g, h = prepare(y)
            return np.array([g[i] + (h[i] + fam.tau_of(i)) * (u[0] - y[i])])

        fam = SurrogateFamily(best_response, np.broadcast_to(
            np.asarray(tau, dtype=float), (self.m,)).copy(), "custom",
            value, gradient, prepare)
        return fam


def logreg_best_response_scalar(inst: LogRegInstance, i: int, x: np.ndarray,
                                tau_i: float) -> float:
    """``S_{lam t}(x_i - t grad_i F(x))`` with ``t = 1 / (tau_i + H_ii(x))``."""
    g = inst.grad(x)[i]
    h = inst.hess_diag(x)[i]
    if not (np.isfinite(g) and np.isfinite(h)):
        raise NumericalError("non-finite logistic derivatives; standardize the features")
    if tau_i + h <= 0:
        raise DomainError(f"block {i} has no curvature and tau = 0")
    t = 1.0 / (tau_i + h)
    v = x[i] - t * g
    return float(np.sign(v) * max(abs(v) - inst.lam * t, 0.0))


def generate_logreg(q: int, m: int, seed: int = 0, lam: float = 0.01,
                    sparsity_fraction: float = 0.1, noise: float = 0.1,
                    normalize: bool = True) -> LogRegInstance:
    """
    Synthetic classification data: standardized Gaussian features and
    labels ``sign(Z x_true + noise)`` for a sparse ``x_true``.
    """
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((q, m))
    Z = (Z - Z.mean(axis=0)) / Z.std(axis=0)
    k = max(1, int(round(sparsity_fraction * m)))
    x_true = np.zeros(m)
    x_true[rng.choice(m, size=k, replace=False)] = rng.standard_normal(k)
    w = np.sign(Z @ x_true + noise * rng.standard_normal(q))
    w[w == 0] = 1.0
    return LogRegInstance(Z, w, lam, normalize)


#%% GROUP LASSO

def group_lasso_problem(A: np.ndarray, z: np.ndarray, lam: float,
                        partition: BlockPartition) -> CompositeProblem:
    """``0.5 ||z - A x||^2 + lam sum_i ||x_i||_2`` with block soft-thresholding."""
    A = np.asarray(A, dtype=float)
    z = np.asarray(z, dtype=float)
    if lam <= 0:
        raise ConfigurationError("lam must be positive")

    def eval_G(x):
        return lam * float(np.sum(partition.block_norms(x)))

    def prox_G(v, t, block=None):
        if block is not None:
            return block_soft_threshold(v, lam * t)
        return np.concatenate([block_soft_threshold(v[partition.slice(i)], lam * t)
                               for i in range(partition.n)])

    return CompositeProblem(
        dim=A.shape[1],
        eval_F=lambda x: 0.5 * float(np.sum((z - A @ x) ** 2)),
        grad_F=lambda x: A.T @ (A @ x - z),
        eval_G=eval_G, prox_G=prox_G,
        lipschitz_hint=gram_lambda_max(A, method="exact"),
        partition=partition)


#%% HUBER REGRESSION

def huber(r, alpha):
    """``r^2`` for ``|r| <= alpha``, ``alpha (2|r| - alpha)`` beyond."""
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    return np.where(a <= alpha, r * r, alpha * (2.0 * a - alpha))


def huber_grad(r, alpha):
    r = np.asarray(r, dtype=float)
    return np.where(np.abs(r) <= alpha, 2.0 * r, 2.0 * alpha * np.sign(r))


def huber_weights(r, alpha):
    """``min(1, alpha / |r|)``, one at ``r = 0``."""
    a = np.abs(np.asarray(r, dtype=float))
    out = np.ones_like(a)
    big = a > alpha
    out[big] = alpha / a[big]
    return out


@dataclass(eq=False)
class HuberInstance:
    """
    ``F(x) = sum_i f_i(x)`` with ``f_i(x) = sum_j H(b_ij^T x - d_ij)``.

    Parameters
    ----------
    B : list of ndarray
        ``B[i]`` has the rows ``b_ij^T`` of agent ``i``.
    d : list of ndarray
        Responses per agent.
    alpha : float
        Cut-off of the Huber function.
    """

    B: List[np.ndarray]
    d: List[np.ndarray]
    alpha: float
    x_true: Optional[np.ndarray] = None

    def __post_init__(self):
        self.B = [np.atleast_2d(np.asarray(b, dtype=float)) for b in self.B]
        self.d = [np.atleast_1d(np.asarray(v, dtype=float)) for v in self.d]
        if len(self.B) != len(self.d) or not self.B:
            raise ConfigurationError("one (B_i, d_i) pair per agent")
        m = self.B[0].shape[1]
        for b, v in zip(self.B, self.d):
            if b.shape[1] != m or b.shape[0] != v.size:
                raise ConfigurationError("inconsistent agent data")
        if not self.alpha > 0:
            raise ConfigurationError("alpha must be positive")

    @property
    def I(self):
        return len(self.B)

    @property
    def m(self):
        return self.B[0].shape[1]

    def f_i(self, i, x):
        return float(np.sum(huber(self.B[i] @ x - self.d[i], self.alpha)))

    def grad_f_i(self, i, x):
        return self.B[i].T @ huber_grad(self.B[i] @ x - self.d[i], self.alpha)

    def F(self, x):
        return sum(self.f_i(i, x) for i in range(self.I))

    def grad_F(self, x):
        return sum(self.grad_f_i(i, x) for i in range(self.I))

    def lipschitz(self):
        return 2.0 * sum(gram_lambda_max(b, method="exact") for b in self.B)

    def composite(self) -> CompositeProblem:
        return CompositeProblem(dim=self.m, eval_F=self.F, grad_F=self.grad_F,
                                lipschitz_hint=self.lipschitz())


def huber_surrogate_solve(inst: HuberInstance, i: int, xk: np.ndarray,
                          aggregate: np.ndarray, variant: str, tau: float) -> np.ndarray:
    """
    Minimizer of agent ``i``'s model plus ``aggregate^T (x - xk)``.

    ``linear`` keeps ``grad f_i(xk)^T (x - xk) + tau/2 ||x - xk||^2`` and
    gives ``xk - (grad f_i(xk) + aggregate) / tau``. ``quadratic`` keeps
    ``sum_j D_j (b_j^T x - d_j)^2 + tau/2 ||x - xk||^2`` with ``D_j =
    min(1, alpha / |r_j|)`` and solves
    ``(tau I + 2 B^T D B) x = tau xk - aggregate + 2 B^T D d``.
    """
    if tau <= 0:
        raise ConfigurationError("tau must be positive")
    xk = np.asarray(xk, dtype=float)
    aggregate = np.asarray(aggregate, dtype=float)
    if variant == "linear":
        return xk - (inst.grad_f_i(i, xk) + aggregate) / tau
    if variant != "quadratic":
        raise ConfigurationError(f"unknown Huber variant {variant!r}")
    B, d = inst.B[i], inst.d[i]
    D = huber_weights(B @ xk - d, inst.alpha)
    M = tau * np.eye(inst.m) + 2.0 * (B.T * D) @ B
    rhs = tau * xk - aggregate + 2.0 * B.T @ (D * d)
    try:
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular Huber surrogate system") from exc


def huber_surrogate_value(inst: HuberInstance, i: int, x: np.ndarray, xk: np.ndarray,
                          variant: str, tau: float) -> float:
    """Model value without the aggregate term, equal to ``f_i(xk)`` at ``x = xk``."""
    dx = x - xk
    base = inst.f_i(i, xk)
    if variant == "linear":
        return base + float(inst.grad_f_i(i, xk) @ dx) + 0.5 * tau * float(dx @ dx)
    B, d = inst.B[i], inst.d[i]
    rk = B @ xk - d
    r = B @ x - d
    D = huber_weights(rk, inst.alpha)
    return base + float(D @ (r * r - rk * rk)) + 0.5 * tau * float(dx @ dx)


def huber_surrogate_grad(inst: HuberInstance, i: int, x: np.ndarray, xk: np.ndarray,
                         variant: str, tau: float) -> np.ndarray:
    dx = x - xk
    if variant == "linear":
        return inst.grad_f_i(i, xk) + tau * dx
    B, d = inst.B[i], inst.d[i]
    D = huber_weights(B @ xk - d, inst.alpha)
    return 2.0 * B.T @ (D * (B @ x - d)) + tau * dx


def generate_huber(I: int = 10, m: int = 20, n_i: int = 10, sigma: float = 0.1,
                   seed: int = 0, outlier_scale: float = 5.0,
                   alpha: Optional[float] = None) -> HuberInstance:
    """
    Regression data with one outlier per agent.

    Rows are unit-norm Gaussian vectors, ``x_true ~ U[-1, 1]^m``, noise
    ``N(0, sigma^2)``; one response per agent gets extra noise of standard
    deviation ``outlier_scale * sigma``. ``alpha`` defaults to ``3 sigma``.
    """
    rng = np.random.default_rng(seed)
    x_true = rng.uniform(-1.0, 1.0, m)
    B, d = [], []
    for _ in range(I):
        b = rng.standard_normal((n_i, m))
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        v = b @ x_true + sigma * rng.standard_normal(n_i)
        v[rng.integers(n_i)] += outlier_scale * sigma * rng.standard_normal()
        B.append(b)
        d.append(v)
    return HuberInstance(B, d, 3.0 * sigma if alpha is None else alpha, x_true)


#%% TARGET LOCALIZATION

@dataclass(eq=False)
class LocalizationInstance:
    """
    Sensors ``s_i`` observe squared distances ``d_it`` to targets ``x_t``.

    ``f_i(x) = sum_t p_it (d_it - ||x_t - s_i||^2)^2``. The decision vector
    stacks the ``n`` targets, each of dimension ``dim``. The feasible set
    is the box ``[lo, hi]^dim`` per target, or the whole space when
    ``lo``/``hi`` are ``None``.
    """

    sensors: np.ndarray
    d: np.ndarray
    p: np.ndarray
    lo: Optional[float] = 0.0
    hi: Optional[float] = 1.0
    targets: Optional[np.ndarray] = None

    def __post_init__(self):
        self.sensors = np.atleast_2d(np.asarray(self.sensors, dtype=float))
        self.d = np.atleast_2d(np.asarray(self.d, dtype=float))
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float))
        if self.d.shape != self.p.shape or self.d.shape[0] != self.sensors.shape[0]:
            raise ConfigurationError("d and p must be (I, n) matching the sensors")
        if not np.all((self.p == 0) | (self.p == 1)):
            raise ConfigurationError("p must be binary")

    @property
    def I(self):
        return self.sensors.shape[0]

    @property
    def n(self):
        return self.d.shape[1]

    @property
    def dim(self):
        return self.sensors.shape[1]

    @property
    def m(self):
        return self.n * self.dim

    def split(self, x):
        return np.asarray(x, dtype=float).reshape(self.n, self.dim)

    def project(self, x, block=None):
        if self.lo is None and self.hi is None:
            return np.asarray(x, dtype=float)
        lo = -np.inf if self.lo is None else self.lo
        hi = np.inf if self.hi is None else self.hi
        return project_box(x, lo, hi)

    def f_i(self, i, x):
        X = self.split(x)
        e = self.d[i] - np.sum((X - self.sensors[i]) ** 2, axis=1)
        return float(np.sum(self.p[i] * e * e))

    def grad_f_i(self, i, x):
        X = self.split(x)
        diff = X - self.sensors[i]
        e = self.d[i] - np.sum(diff ** 2, axis=1)
        return (-4.0 * (self.p[i] * e)[:, None] * diff).ravel()

    def F(self, x):
        return sum(self.f_i(i, x) for i in range(self.I))

    def grad_F(self, x):
        return sum(self.grad_f_i(i, x) for i in range(self.I))

    def composite(self) -> CompositeProblem:
        return CompositeProblem(dim=self.m, eval_F=self.F, grad_F=self.grad_F,
                                project=self.project)


def _partial_convex_terms(s, xt, d):
    S = 4.0 * np.outer(s, s) + 2.0 * (s @ s) * np.eye(s.size)
    b = 4.0 * (s @ s) * s - 4.0 * (xt @ xt - d) * (xt - s) + 8.0 * (s @ xt) * xt
    return S, b


def localization_surrogate_solve(inst: LocalizationInstance, i: int, xk: np.ndarray,
                                 aggregate: np.ndarray, variant: str,
                                 tau: float) -> np.ndarray:
    """
    Minimizer over the feasible box of agent ``i``'s model plus
    ``aggregate^T (x - xk)``, target by target.

    ``linear`` is the projected step ``Pi(x_t - (grad_t f_i + c_t) / tau)``.
    ``partial_convex`` keeps the quadratic ``x^T S_i x`` with ``S_i = 4 s
    s^T + 2 ||s||^2 I``, linearizes the remaining terms through ``b_it``
    and solves ``(2 p_it S_i + tau I) x_t = p_it b_it + tau x_t^k - c_t``
    before projecting. The projection after the solve is the exact
    constrained minimizer whenever the box is inactive.
    """
    if tau <= 0:
        raise ConfigurationError("tau must be positive")
    Xk = inst.split(xk)
    C = inst.split(aggregate)
    if variant == "linear":
        return inst.project(np.asarray(xk, dtype=float)
                            - (inst.grad_f_i(i, xk) + np.ravel(C)) / tau)
    if variant != "partial_convex":
        raise ConfigurationError(f"unknown localization variant {variant!r}")
    s = inst.sensors[i]
    out = np.empty_like(Xk)
    for t in range(inst.n):
        S, b = _partial_convex_terms(s, Xk[t], inst.d[i, t])
        p = inst.p[i, t]
        M = 2.0 * p * S + tau * np.eye(inst.dim)
        out[t] = np.linalg.solve(M, p * b + tau * Xk[t] - C[t])
    return inst.project(out.ravel())


def localization_surrogate_value(inst: LocalizationInstance, i: int, x: np.ndarray,
                                 xk: np.ndarray, variant: str, tau: float) -> float:
    """Model value without the aggregate term, equal to ``f_i(xk)`` at ``x = xk``."""
    dx = np.asarray(x, dtype=float) - xk
    base = inst.f_i(i, xk)
    if variant == "linear":
        return base + float(inst.grad_f_i(i, xk) @ dx) + 0.5 * tau * float(dx @ dx)
    X, Xk = inst.split(x), inst.split(xk)
    s = inst.sensors[i]
    v = base + 0.5 * tau * float(dx @ dx)
    for t in range(inst.n):
        S, b = _partial_convex_terms(s, Xk[t], inst.d[i, t])

        def q(u):
            return float(u @ S @ u - b @ u)
        v += inst.p[i, t] * (q(X[t]) - q(Xk[t]))
    return v


def localization_surrogate_grad(inst: LocalizationInstance, i: int, x: np.ndarray,
                                xk: np.ndarray, variant: str, tau: float) -> np.ndarray:
    dx = np.asarray(x, dtype=float) - xk
    if variant == "linear":
        return inst.grad_f_i(i, xk) + tau * dx
    X, Xk = inst.split(x), inst.split(xk)
    g = np.empty_like(X)
    for t in range(inst.n):
        S, b = _partial_convex_terms(inst.sensors[i], Xk[t], inst.d[i, t])
        g[t] = inst.p[i, t] * (2.0 * S @ X[t] - b)
    return g.ravel() + tau * dx


def generate_localization(I: int = 10, n: int = 2, seed: int = 0, noise: float = 0.0,
                          dim: int = 2, min_observers: int = 3) -> LocalizationInstance:
    """
    Sensors and targets uniform in the unit box, each sensor observing each
    target with probability one half (redrawn until every target has at
    least ``min_observers`` observers). ``noise`` is the standard deviation
    of additive noise on the squared distances.
    """
    if min_observers > I:
        raise ConfigurationError("min_observers exceeds the number of sensors")
    rng = np.random.default_rng(seed)
    sensors = rng.random((I, dim))
    targets = rng.random((n, dim))
    while True:
        p = (rng.random((I, n)) < 0.5).astype(float)
        if np.all(p.sum(axis=0) >= min_observers):
            break
    d = np.sum((targets[None, :, :] - sensors[:, None, :]) ** 2, axis=2)
    if noise > 0:
        d = d + noise * rng.standard_normal(d.shape)
    return LocalizationInstance(sensors, d, p, 0.0, 1.0, targets)


#%% MATRIX IO

def write_matrix_csv(path, M: np.ndarray):
    """Dense row-major CSV; the first line holds ``rows,cols``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([M.shape[0], M.shape[1]])
        for row in M:
            w.writerow(["%.17g" % v for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigurationError(f"{path}: empty matrix file")
    try:
        r, c = (int(v) for v in rows[0])
        M = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    except ValueError as exc:
        raise ConfigurationError(f"{path}: malformed matrix file") from exc
    if r == 0:
        return np.zeros((0, c))
    if M.shape != (r, c):
        raise ConfigurationError(f"{path}: header says {r}x{c}, found {M.shape}")
    return M
