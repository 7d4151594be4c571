"""
Foundational types and primitives.

Block partitions, composite problems ``V = F + G`` over a product of
convex sets, step-size schedules, merit quantities, the soft-thresholding
and projection primitives, and the Armijo-type backtracking rule used by
the parallel engines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (ConfigurationError, ContractViolation, DomainError,
                     LineSearchError)


TOL_FEASIBILITY = 1e-12
TOL_GRADIENT_CHECK = 1e-5
TOL_CONVERGENCE = 1e-6
ARMIJO_MAX_BACKTRACKS = 64


#%% BLOCKS

@dataclass(frozen=True)
class BlockPartition:
    """
    Ordered partition of a vector of length ``total`` into contiguous blocks.

    Parameters
    ----------
    sizes : sequence of int
        Block dimensions, each at least one.
    """

    sizes: tuple
    offsets: tuple = field(init=False)
    total: int = field(init=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) == 0 or any(s < 1 for s in sizes):
            raise ConfigurationError("block sizes must be positive integers")
        offsets = (0,) + tuple(np.cumsum(sizes)[:-1].tolist())
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "total", int(sum(sizes)))

    @classmethod
    def scalar(cls, m: int) -> "BlockPartition":
        """Partition into ``m`` scalar blocks."""
        return cls((1,) * int(m))

    @classmethod
    def uniform(cls, m: int, size: int) -> "BlockPartition":
        """Blocks of equal ``size`` (the last one may be shorter)."""
        full, rest = divmod(int(m), int(size))
        return cls((size,) * full + ((rest,) if rest else ()))

    @property
    def n(self) -> int:
        return len(self.sizes)

    def slice(self, i: int) -> slice:
        o = self.offsets[i]
        return slice(o, o + self.sizes[i])

    def extract(self, x: np.ndarray, i: int) -> np.ndarray:
        """View of block ``i`` of ``x`` (no copy)."""
        return x[self.slice(i)]

    def assemble(self, blocks: Sequence[np.ndarray]) -> np.ndarray:
        if len(blocks) != self.n:
            raise DomainError("wrong number of blocks")
        return np.concatenate([np.atleast_1d(np.asarray(b, dtype=float))
                               for b in blocks])

    def block_norms(self, v: np.ndarray) -> np.ndarray:
        """Euclidean norm of every block of ``v``."""
        if all(s == 1 for s in self.sizes):
            return np.abs(v)
        return np.array([np.linalg.norm(v[self.slice(i)])
                         for i in range(self.n)])


#%% PROBLEMS

def _zero(x):
    return 0.0


def _identity_project(v, block=None):
    return v


@dataclass
class CompositeProblem:
    """
    Problem ``min F(x) + G(x)`` subject to ``x_i in X_i``.

    Parameters
    ----------
    dim : int
        Length ``m`` of the decision vector.
    eval_F, grad_F : callable
        Smooth term and its gradient.
    eval_G : callable, optional
        Convex nonsmooth term; zero when omitted.
    prox_G : callable, optional
        ``prox_G(v, t, block)`` returns the minimizer of
        ``t * g_block(u) + 0.5 * ||u - v||^2`` over ``X_block``; ``block``
        is ``None`` for the whole vector. Defaults to the projection, which
        is exact when ``G`` is zero.
    project : callable, optional
        ``project(v, block)`` Euclidean projection onto ``X_block``.
    block_grad_F : callable, optional
        ``block_grad_F(x, i)``; sliced from ``grad_F`` when omitted.
    lipschitz_hint : float, optional
        Lipschitz constant of ``grad_F`` on the feasible set.
    separable_G : bool
        Whether ``G`` splits across the blocks of ``partition``.
    partition : BlockPartition, optional
        Defaults to a single block.
    """

    dim: int
    eval_F: Callable[[np.ndarray], float]
    grad_F: Callable[[np.ndarray], np.ndarray]
    eval_G: Callable[[np.ndarray], float] = _zero
    prox_G: Optional[Callable] = None
    project: Callable = _identity_project
    block_grad_F: Optional[Callable] = None
    lipschitz_hint: Optional[float] = None
    separable_G: bool = True
    partition: Optional[BlockPartition] = None

    def __post_init__(self):
        if self.partition is None:
            self.partition = BlockPartition((self.dim,))
        if self.partition.total != self.dim:
            raise ConfigurationError("partition does not match dimension")
        if self.prox_G is None:
            project = self.project
            self.prox_G = lambda v, t, block=None: project(v, block)

    def value(self, x: np.ndarray) -> float:
        return float(self.eval_F(x)) + float(self.eval_G(x))

    def block_gradient(self, x: np.ndarray, i: int) -> np.ndarray:
        if self.block_grad_F is not None:
            return self.block_grad_F(x, i)
        return self.grad_F(x)[self.partition.slice(i)]

    def prox_residual(self, x: np.ndarray, step: float = 1.0) -> float:
        """``||prox_{step G}(x - step * grad F(x)) - x||`` over the whole vector."""
        g = self.grad_F(x)
        return float(np.linalg.norm(self.prox_G(x - step * g, step, None) - x))


#%% PRIMITIVES

def soft_threshold(x, alpha):
    """
    Soft-thresholding operator ``sign(x) * max(|x| - alpha, 0)``.

    Works on scalars and component-wise on arrays; ``alpha`` may be an
    array broadcastable against ``x``.
    """
    a = np.asarray(alpha, dtype=float)
    if np.any(a < 0):
        raise DomainError("soft-threshold level must be nonnegative")
    xv = np.asarray(x, dtype=float)
    out = np.sign(xv) * np.maximum(np.abs(xv) - a, 0.0)
    if np.ndim(out) == 0:
        return float(out)
    return out


def block_soft_threshold(v: np.ndarray, alpha: float) -> np.ndarray:
    """Proximal map of ``alpha * ||.||_2``: ``(1 - alpha/||v||)_+ v``."""
    if alpha < 0:
        raise DomainError("threshold must be nonnegative")
    nv = np.linalg.norm(v)
    if nv <= alpha:
        return np.zeros_like(v)
    return (1.0 - alpha / nv) * v


def project_box(v, lo, hi):
    lo = np.broadcast_to(np.asarray(lo, dtype=float), np.shape(v))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), np.shape(v))
    if np.any(lo > hi):
        raise DomainError("box with lo > hi")
    return np.minimum(np.maximum(v, lo), hi)


def project_nonneg(v):
    return np.maximum(v, 0.0)


def project_ball2(v, radius):
    if radius <= 0:
        raise DomainError("radius must be positive")
    nv = np.linalg.norm(v)
    if nv <= radius:
        return np.array(v, dtype=float, copy=True)
    return np.asarray(v, dtype=float) * (radius / nv)


def power_iteration(M: np.ndarray, iters: int = 50, seed: int = 0) -> float:
    """
    Largest eigenvalue of the symmetric PSD matrix ``M``.

    A fixed number of power iterations from a seeded random start. The
    Rayleigh quotient of the last iterate is returned, which never
    overestimates ``lambda_max``.
    """
    n = M.shape[0]
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = M @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
    lam = float(v @ (M @ v))
    return lam


def gram_lambda_max(A: np.ndarray, iters: int = 50, seed: int = 0,
                    method: str = "power") -> float:
    """
    ``lambda_max(A^T A)`` from the smaller of the two Gram matrices.

    ``method="power"`` runs ``iters`` power iterations; ``"exact"`` uses a
    dense symmetric eigensolver. Power iterations can underestimate the
    top eigenvalue, so solvers whose correctness depends on a true upper
    bound (MM majorizers) ask for ``"exact"``.
    """
    A = np.atleast_2d(A)
    q, m = A.shape
    G = A @ A.T if q < m else A.T @ A
    if method == "exact":
        return float(max(np.linalg.eigvalsh(G)[-1], 0.0))
    if method != "power":
        raise ConfigurationError(f"unknown eigenvalue method {method!r}")
    return power_iteration(G, iters=iters, seed=seed)


def lipschitz_least_squares(A: np.ndarray, iters: int = 50,
                            method: str = "power") -> float:
    """Lipschitz constant ``2 lambda_max(A^T A)`` of the gradient of ``||z - Ax||^2``."""
    return 2.0 * gram_lambda_max(A, iters=iters, method=method)


#%% MERITS

@dataclass
class MeritReport:
    """Per-iteration quantities used for stopping and tracing."""

    objective: float
    fixed_point_residual: float = float("nan")
    relative_descent: float = float("nan")
    iterate_delta: float = float("nan")


def relative_descent(v_old: float, v_new: float) -> float:
    """``(V^k - V^{k+1}) / max(1, |V^k|)``."""
    return (v_old - v_new) / max(1.0, abs(v_old))


def iterate_delta(x_old: np.ndarray, x_new: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(x_new) - np.asarray(x_old)))


#%% STEP-SIZES

class Schedule:
    """
    Step-size policy with internal state.

    Use the class methods :meth:`constant`, :meth:`recursive`,
    :meth:`ratio` and :meth:`armijo`. ``gamma`` holds the value for the
    current iteration; :func:`next_stepsize` advances the policy.
    """

    KINDS = ("constant", "recursive", "ratio", "armijo")

    def __init__(self, kind: str, gamma0: float, **params):
        if kind not in self.KINDS:
            raise ConfigurationError(f"unknown schedule kind {kind!r}")
        if not (0.0 < gamma0 <= 1.0):
            raise ConfigurationError("initial step-size must lie in (0, 1]")
        self.kind = kind
        self.gamma0 = float(gamma0)
        self.params = params
        self.gamma = float(gamma0)
        self.k = 0

    @classmethod
    def constant(cls, gamma: float) -> "Schedule":
        return cls("constant", gamma)

    @classmethod
    def recursive(cls, gamma0: float, eps: float) -> "Schedule":
        """``gamma^k = gamma^{k-1} (1 - eps gamma^{k-1})``."""
        if not (0.0 < eps < 1.0):
            raise ConfigurationError("eps must lie in (0, 1)")
        if gamma0 * eps >= 1.0:
            raise ConfigurationError("recursive rule needs gamma0 < 1/eps")
        return cls("recursive", gamma0, eps=float(eps))

    @classmethod
    def ratio(cls, alpha: Callable[[int], float], beta: Callable[[int], float],
              gamma0: float = 1.0, check_horizon: int = 1000) -> "Schedule":
        """
        ``gamma^k = (gamma^{k-1} + alpha(k)) / (1 + beta(k))``.

        The conditions ``0 <= alpha(k) <= beta(k)``, a vanishing ratio and a
        diverging series of ratios can only be probed on a finite horizon;
        the first two are checked pointwise up to ``check_horizon`` and the
        ratio must shrink and stay summable-away-from-zero on that window.
        """
        ks = np.arange(1, check_horizon + 1)
        a = np.array([alpha(int(k)) for k in ks], dtype=float)
        b = np.array([beta(int(k)) for k in ks], dtype=float)
        if np.any(a < 0) or np.any(a > b):
            raise ConfigurationError("ratio rule needs 0 <= alpha(k) <= beta(k)")
        r = np.divide(a, b, out=np.zeros_like(a), where=b > 0)
        if r.sum() <= 0 or r[-1] > r[0]:
            raise ConfigurationError("alpha/beta must vanish with a divergent sum")
        return cls("ratio", gamma0, alpha=alpha, beta=beta)

    @classmethod
    def armijo(cls, alpha: float = 0.1, delta: float = 0.5,
               gamma0: float = 1.0) -> "Schedule":
        if not (0.0 < alpha < 1.0 and 0.0 < delta < 1.0):
            raise ConfigurationError("Armijo parameters must lie in (0, 1)")
        return cls("armijo", gamma0, alpha=float(alpha), delta=float(delta))

    def reset(self):
        self.gamma = self.gamma0
        self.k = 0

    def copy(self) -> "Schedule":
        s = Schedule(self.kind, self.gamma0, **self.params)
        s.gamma, s.k = self.gamma, self.k
        return s


def next_stepsize(schedule: Schedule) -> float:
    """Advance ``schedule`` by one iteration and return the new step-size."""
    s = schedule
    s.k += 1
    if s.kind == "recursive":
        s.gamma = s.gamma * (1.0 - s.params["eps"] * s.gamma)
    elif s.kind == "ratio":
        s.gamma = (s.gamma + s.params["alpha"](s.k)) / (1.0 + s.params["beta"](s.k))
    if not (0.0 < s.gamma <= 1.0) or not math.isfinite(s.gamma):
        raise ContractViolation(f"step-size {s.gamma} left (0, 1]",
                                invariant="stepsize-range")
    return s.gamma


#%% LINE SEARCH

def armijo_linesearch(problem: CompositeProblem, x: np.ndarray,
                      direction: np.ndarray, g_decrease: float,
                      alpha: float = 0.1, delta: float = 0.5,
                      gamma0: float = 1.0, v_x: Optional[float] = None,
                      max_backtracks: int = ARMIJO_MAX_BACKTRACKS) -> float:
    """
    Backtracking for ``V(x + g d) <= V(x) + alpha g D``.

    Parameters
    ----------
    problem : CompositeProblem
    x, direction : ndarray
        Current point and ``z_hat - x`` (zero outside the selected blocks).
    g_decrease : float
        ``D = grad F(x)^T d + sum_{i in S} (G(z_i, x_-i) - G(x))``; must be
        nonpositive for a valid best-response direction.
    alpha, delta, gamma0 : float
        Sufficient-decrease fraction, contraction factor, first trial.
    v_x : float, optional
        ``V(x)`` if already known.

    Returns
    -------
    float
        ``gamma0 * delta**t`` for the smallest admissible ``t``.
    """
    if v_x is None:
        v_x = problem.value(x)
    if g_decrease > 1e-12 * max(1.0, abs(v_x)):
        raise ContractViolation(
            f"line-search decrease measure {g_decrease:.3e} is positive",
            invariant="armijo-descent-direction")
    gamma = gamma0
    for _ in range(max_backtracks + 1):
        if problem.value(x + gamma * direction) <= v_x + alpha * gamma * g_decrease:
            return gamma
        gamma *= delta
    raise LineSearchError(f"no admissible step after {max_backtracks} backtracks")


#%% NUMERICAL HELPERS

def finite_difference_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                               h: float = 1e-6) -> np.ndarray:
    """Central differences, step scaled by ``max(1, |x_j|)``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        step = h * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = step
        g[j] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def relative_error(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b)))
