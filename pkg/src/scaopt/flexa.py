"""
Parallel successive convex approximation.

The generic engine :func:`flexa_run` covers the all-block scheme, the
selective inexact scheme with cyclic, greedy and random selections, and the
random-greedy hybrid. :func:`flexa_parallel_cyclic` runs the hybrid in
which workers sweep their own blocks Gauss-Seidel style against the
iteration-start snapshot of the other workers' blocks.

:func:`flexa_lasso` and :func:`flexa_logreg` are specialized drivers for
scalar blocks with closed-form best responses, adaptive proximal weights
and the relative-error guarded diminishing step-size.

Parallel execution uses a thread pool. Every parallel stage reads an
immutable snapshot and writes disjoint output slots that are merged in a
fixed order, so results do not depend on the number of threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from .core import (BlockPartition, CompositeProblem, MeritReport, Schedule, armijo_linesearch,
                   iterate_delta, next_stepsize, relative_descent)
from .errors import ConfigurationError, ContractViolation, NumericalError
from .kernels import lasso_cyclic_sweep, logreg_cyclic_sweep, soft_threshold_vec


#%% SURROGATES

@dataclass
class SurrogateFamily:
    """
    Per-block strongly convex models ``F_i(.|y)`` and their best responses.

    Parameters
    ----------
    best_response : callable
        ``(i, y, ctx) -> x_hat_i``, the minimizer over ``X_i`` of
        ``F_i(.|y) + g_i``. ``ctx`` is the output of ``prepare(y)`` or
        ``None``, in which case the solver must compute what it needs.
    tau : array_like
        Strong-convexity constants, one per block.
    kind : str
        ``prox_linear``, ``block_convex``, ``sum_utility``,
        ``composition`` or ``custom``.
    value, gradient : callable, optional
        ``(i, u, y)`` giving the smooth model value and its gradient in
        ``u``; used by consistency checks.
    prepare : callable, optional
        ``y -> ctx``, shared work done once per iterate (e.g. the full
        gradient) before the per-block solves.
    """

    best_response: Callable
    tau: np.ndarray
    kind: str = "custom"
    value: Optional[Callable] = None
    gradient: Optional[Callable] = None
    prepare: Optional[Callable] = None

    def __post_init__(self):
        self.tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        if np.any(self.tau <= 0):
            raise ConfigurationError("tau must be positive")

    def tau_of(self, i):
        return float(self.tau[i] if self.tau.size > 1 else self.tau[0])


def _inner_prox_grad(val, grad, prox, u0, tol=1e-12, max_iter=5000):
    """Backtracking proximal gradient for the strongly convex block models."""
    u = np.array(u0, dtype=float, copy=True)
    L = 1.0
    for _ in range(max_iter):
        g = grad(u)
        fu = val(u)
        while True:
            u_new = prox(u - g / L, 1.0 / L)
            d = u_new - u
            if val(u_new) <= fu + g @ d + 0.5 * L * (d @ d) + 1e-14 * max(1.0, abs(fu)):
                break
            L *= 2.0
            if L > 1e16:
                raise NumericalError("inner solver step-size underflow")
        u = u_new
        if np.linalg.norm(d) <= tol * max(1.0, np.linalg.norm(u)):
            break
        L = max(L / 2.0, 1e-12)
    return u


def _with_block(y, sl, u):
    x = np.array(y, dtype=float, copy=True)
    x[sl] = u
    return x


def prox_linear_family(problem: CompositeProblem, tau) -> SurrogateFamily:
    """
    Linearized model ``grad_i F(y)^T (u - y_i) + tau_i/2 ||u - y_i||^2``.

    The best response is the proximal-gradient step
    ``prox_{g_i / tau_i}(y_i - grad_i F(y) / tau_i)``.
    """
    part = problem.partition
    fam = None

    def prepare(y):
        return problem.grad_F(y)

    def best_response(i, y, ctx=None):
        sl = part.slice(i)
        g = ctx[sl] if ctx is not None else problem.block_gradient(y, i)
        t = 1.0 / fam.tau_of(i)
        return problem.prox_G(y[sl] - t * g, t, i)

    def value(i, u, y):
        sl = part.slice(i)
        d = u - y[sl]
        return float(problem.block_gradient(y, i) @ d + 0.5 * fam.tau_of(i) * (d @ d))

    def gradient(i, u, y):
        sl = part.slice(i)
        return problem.block_gradient(y, i) + fam.tau_of(i) * (u - y[sl])

    fam = SurrogateFamily(best_response, np.broadcast_to(tau, (part.n,)).copy()
                          if np.ndim(tau) == 0 else tau, "prox_linear",
                          value, gradient, prepare)
    return fam


def _generic_family(problem, tau, kind, value, gradient, solver=None,
                    inner_tol=1e-12):
    part = problem.partition

    def best_response(i, y, ctx=None):
        if solver is not None:
            return solver(i, y)
        sl = part.slice(i)
        return _inner_prox_grad(lambda u: value(i, u, y),
                                lambda u: gradient(i, u, y),
                                lambda v, t: problem.prox_G(v, t, i),
                                y[sl], tol=inner_tol)

    tau = np.broadcast_to(np.asarray(tau, dtype=float), (part.n,)).copy()
    return SurrogateFamily(best_response, tau, kind, value, gradient)


def block_convex_family(problem: CompositeProblem, tau, solver=None,
                        inner_tol=1e-12) -> SurrogateFamily:
    """
    Model ``F(u, y_-i) + tau_i/2 ||u - y_i||^2`` for ``F`` convex in each block.

    ``solver(i, y)`` may supply a closed-form best response; otherwise a
    backtracking proximal-gradient inner loop is used.
    """
    part = problem.partition
    fam_tau = np.broadcast_to(np.asarray(tau, dtype=float), (part.n,))

    def value(i, u, y):
        sl = part.slice(i)
        d = u - y[sl]
        return float(problem.eval_F(_with_block(y, sl, u))) + 0.5 * fam_tau[i] * float(d @ d)

    def gradient(i, u, y):
        sl = part.slice(i)
        return problem.block_gradient(_with_block(y, sl, u), i) + fam_tau[i] * (u - y[sl])

    return _generic_family(problem, tau, "block_convex", value, gradient,
                           solver, inner_tol)


def sum_utility_family(problem: CompositeProblem, terms: Sequence, convex_sets,
                       tau, inner_tol=1e-12) -> SurrogateFamily:
    """
    Model for ``F = sum_j f_j`` keeping the terms convex in block ``i``.

    Parameters
    ----------
    terms : sequence of (f, grad_f)
        Callables on the full vector.
    convex_sets : sequence of sets
        ``convex_sets[i]`` lists the indices ``j`` whose ``f_j`` is kept
        exactly in block ``i``; the remaining terms are linearized at ``y``.
    """
    part = problem.partition
    tau_b = np.broadcast_to(np.asarray(tau, dtype=float), (part.n,))

    def _lin(i, y):
        sl = part.slice(i)
        g = np.zeros(part.sizes[i])
        for j, (_, gf) in enumerate(terms):
            if j not in convex_sets[i]:
                g = g + gf(y)[sl]
        return g

    def value(i, u, y):
        sl = part.slice(i)
        x = _with_block(y, sl, u)
        d = u - y[sl]
        kept = sum(float(terms[j][0](x)) for j in convex_sets[i])
        return kept + float(_lin(i, y) @ d) + 0.5 * tau_b[i] * float(d @ d)

    def gradient(i, u, y):
        sl = part.slice(i)
        x = _with_block(y, sl, u)
        g = _lin(i, y) + tau_b[i] * (u - y[sl])
        for j in convex_sets[i]:
            g = g + terms[j][1](x)[sl]
        return g

    return _generic_family(problem, tau, "sum_utility", value, gradient,
                           inner_tol=inner_tol)


def composition_family(problem: CompositeProblem, h, grad_h, fmap, jac, tau,
                       inner_tol=1e-12) -> SurrogateFamily:
    """
    Model for ``F = h(f(x))`` with ``h`` convex and nondecreasing.

    Block ``i`` uses ``h(f(y) + J_i(y)(u - y_i)) + tau_i/2 ||u - y_i||^2``
    where ``J_i`` is the block of columns of the Jacobian of ``f``.
    """
    part = problem.partition
    tau_b = np.broadcast_to(np.asarray(tau, dtype=float), (part.n,))

    def _inner(i, u, y):
        sl = part.slice(i)
        Ji = np.atleast_2d(jac(y))[:, sl]
        return fmap(y) + Ji @ (u - y[sl]), Ji

    def value(i, u, y):
        s, _ = _inner(i, u, y)
        d = u - y[part.slice(i)]
        return float(h(s)) + 0.5 * tau_b[i] * float(d @ d)

    def gradient(i, u, y):
        s, Ji = _inner(i, u, y)
        return Ji.T @ grad_h(s) + tau_b[i] * (u - y[part.slice(i)])

    return _generic_family(problem, tau, "composition", value, gradient,
                           inner_tol=inner_tol)


def best_response_prox_linear(problem: CompositeProblem, i: int, x: np.ndarray,
                              tau_i: float) -> np.ndarray:
    """Best response of block ``i`` for the linearized model with weight ``tau_i``."""
    if tau_i <= 0:
        raise ConfigurationError("tau must be positive")
    sl = problem.partition.slice(i)
    t = 1.0 / tau_i
    return problem.prox_G(x[sl] - t * problem.block_gradient(x, i), t, i)


#%% SELECTION

@dataclass
class Sampling:
    """
    Random block sampling law.

    Parameters
    ----------
    kind : str
        ``uniform`` (independent inclusion with probability ``prob``),
        ``doubly_uniform`` (size drawn from ``q``, then a uniform subset),
        ``nonoverlapping_uniform`` (one set of ``partition`` uniformly),
        ``nice`` (``tau`` distinct blocks uniformly), ``sequential`` or
        ``fully_parallel``.
    seed : int
    """

    kind: str
    tau: Optional[int] = None
    prob: Optional[float] = None
    q: Optional[Sequence[float]] = None
    partition: Optional[Sequence[Sequence[int]]] = None
    seed: int = 0

    KINDS = ("uniform", "doubly_uniform", "nonoverlapping_uniform", "nice",
             "sequential", "fully_parallel")

    def validate(self, n: int):
        if self.kind not in self.KINDS:
            raise ConfigurationError(f"unknown sampling {self.kind!r}")
        if self.kind == "nice" and (self.tau is None or not 1 <= self.tau <= n):
            raise ConfigurationError("nice sampling needs 1 <= tau <= n")
        if self.kind == "uniform" and (self.prob is None or not 0 < self.prob <= 1):
            raise ConfigurationError("uniform sampling needs prob in (0, 1]")
        if self.kind == "doubly_uniform":
            q = np.asarray(self.q, dtype=float) if self.q is not None else None
            if q is None or q.shape != (n,) or np.any(q < 0) or abs(q.sum() - 1) > 1e-12:
                raise ConfigurationError("doubly uniform sampling needs q over sizes 1..n")
        if self.kind == "nonoverlapping_uniform":
            _check_partition(self.partition, n)


def _check_partition(groups, n):
    if not groups:
        raise ConfigurationError("empty block partition")
    flat = [int(i) for g in groups for i in g]
    if any(len(g) == 0 for g in groups) or sorted(flat) != list(range(n)):
        raise ConfigurationError("groups must partition the blocks without overlap")


def sample_blocks(sampling: Sampling, n: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Draw a block set (sorted indices) from ``sampling``."""
    sampling.validate(n)
    rng = rng if rng is not None else np.random.default_rng(sampling.seed)
    k = sampling.kind
    if k == "fully_parallel":
        return np.arange(n)
    if k == "sequential":
        return np.array([rng.integers(n)])
    if k == "nice":
        return np.sort(rng.choice(n, size=sampling.tau, replace=False))
    if k == "doubly_uniform":
        size = int(rng.choice(np.arange(1, n + 1), p=np.asarray(sampling.q, dtype=float)))
        return np.sort(rng.choice(n, size=size, replace=False))
    if k == "nonoverlapping_uniform":
        g = sampling.partition[rng.integers(len(sampling.partition))]
        return np.sort(np.asarray(g, dtype=int))
    # uniform: independent inclusion, one uniform block when the draw is empty
    pick = np.flatnonzero(rng.random(n) < sampling.prob)
    if pick.size == 0:
        pick = np.array([rng.integers(n)])
    return pick


@dataclass
class SelectionRule:
    """
    Block selection for the FLEXA engines.

    Parameters
    ----------
    kind : str
        ``all``, ``essentially_cyclic``, ``greedy``, ``random``,
        ``random_greedy``, ``partitioned_cyclic`` or
        ``partitioned_greedy_cyclic``.
    rho : float
        Greedy fraction in (0, 1].
    T : int, optional
        Window of the cyclic rule; at least the number of groups.
    groups : sequence of sequences, optional
        Cover of the blocks visited in turn by the cyclic rule (singletons
        by default).
    sampling : Sampling, optional
        Random pool law for ``random`` and ``random_greedy``.
    workers : sequence of sequences, optional
        Partition of the blocks over workers for the partitioned kinds.
    """

    kind: str = "all"
    rho: float = 1.0
    T: Optional[int] = None
    groups: Optional[Sequence[Sequence[int]]] = None
    sampling: Optional[Sampling] = None
    workers: Optional[Sequence[Sequence[int]]] = None

    KINDS = ("all", "essentially_cyclic", "greedy", "random", "random_greedy",
             "partitioned_cyclic", "partitioned_greedy_cyclic")

    def validate(self, n: int):
        if self.kind not in self.KINDS:
            raise ConfigurationError(f"unknown selection rule {self.kind!r}")
        if "greedy" in self.kind and not (0.0 < self.rho <= 1.0):
            raise ConfigurationError("rho must lie in (0, 1]")
        if self.kind == "essentially_cyclic":
            groups = self.cyclic_groups(n)
            flat = sorted({int(i) for g in groups for i in g})
            if flat != list(range(n)):
                raise ConfigurationError("cyclic groups must cover every block")
            if self.T is not None and self.T < len(groups):
                raise ConfigurationError("window T too short to visit every block")
        if self.kind in ("random", "random_greedy"):
            if self.sampling is None:
                raise ConfigurationError("random selection needs a sampling law")
            self.sampling.validate(n)
        if self.kind.startswith("partitioned"):
            _check_partition(self.workers, n)

    def cyclic_groups(self, n):
        return [list(g) for g in self.groups] if self.groups else [[i] for i in range(n)]


def greedy_select(E, rho: float) -> np.ndarray:
    """``{i : E_i >= rho * max_j E_j}``; the argmax is always included."""
    if not (0.0 < rho <= 1.0):
        raise ConfigurationError("rho must lie in (0, 1]")
    E = np.asarray(E, dtype=float)
    finite = np.isfinite(E)
    if not np.any(finite):
        raise NumericalError("no finite error bound")
    M = np.max(E[finite])
    return np.flatnonzero(finite & (E >= rho * M))


def error_bound_default(problem: CompositeProblem, i: int, x: np.ndarray,
                        x_hat_i: Optional[np.ndarray] = None,
                        grad: Optional[np.ndarray] = None) -> float:
    """
    Error bound ``E_i`` for block ``i``.

    With ``x_hat_i`` the best-response displacement is returned. Otherwise
    the projected (``G = 0``) or proximal gradient residual
    ``||prox_{g_i}(x_i - grad_i F(x)) - x_i||`` is used; this requires a
    block-separable ``G``.
    """
    sl = problem.partition.slice(i)
    if x_hat_i is not None:
        return float(np.linalg.norm(np.asarray(x_hat_i) - x[sl]))
    if not problem.separable_G:
        raise ConfigurationError("no default error bound for nonseparable G; pass x_hat")
    g = grad[sl] if grad is not None else problem.block_gradient(x, i)
    return float(np.linalg.norm(problem.prox_G(x[sl] - g, 1.0, i) - x[sl]))


@dataclass
class InexactPolicy:
    """
    Accuracy of the block solves.

    ``epsilon(k)`` gives the tolerance at iteration ``k`` (it should vanish)
    and ``solver(i, y, eps)`` returns ``z_i`` within ``eps`` of the best
    response. Without a solver the best response is used exactly. With
    ``descent_check`` every accepted ``z_i`` must satisfy
    ``grad_i F^T (z_i - x_i) + G(z_i, x_-i) - G(x) <= -tau_i/2 ||z_i - x_i||^2``.
    """

    epsilon: Optional[Callable[[int], float]] = None
    solver: Optional[Callable] = None
    descent_check: bool = False

    def tolerance(self, k):
        return 0.0 if self.epsilon is None else float(self.epsilon(k))


#%% ENGINE

@dataclass
class FlexaResult:
    x: np.ndarray
    reports: List[MeritReport] = field(default_factory=list)
    gammas: List[float] = field(default_factory=list)
    selected: List[np.ndarray] = field(default_factory=list)
    iterates: List[np.ndarray] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    @property
    def objective(self):
        return [r.objective for r in self.reports]


@contextmanager
def _pool(workers: int):
    if workers is None or workers <= 1:
        yield None
    else:
        with ThreadPoolExecutor(max_workers=int(workers)) as ex:
            yield ex


def _pmap(pool, fn, items):
    if pool is None:
        return [fn(it) for it in items]
    return list(pool.map(fn, items))


def _g_of_block(problem, x, i, zi):
    sl = problem.partition.slice(i)
    return float(problem.eval_G(_with_block(x, sl, zi)))


def _descent_check(problem, fam, x, grad, i, zi, Gx, scale):
    sl = problem.partition.slice(i)
    d = zi - x[sl]
    lhs = float(grad[sl] @ d) + _g_of_block(problem, x, i, zi) - Gx
    rhs = -0.5 * fam.tau_of(i) * float(d @ d)
    if lhs > rhs + 1e-10 * scale:
        raise ContractViolation(
            f"block {i}: inexact solution violates the descent condition "
            f"({lhs:.3e} > {rhs:.3e})", invariant="inexact-descent")


def flexa_run(problem: CompositeProblem, surrogates: SurrogateFamily,
              select: SelectionRule, schedule: Schedule,
              inexact: Optional[InexactPolicy] = None, max_iters: int = 1000,
              stop_tol: float = 1e-6, x0: Optional[np.ndarray] = None,
              workers: int = 1, seed: int = 0, record_iterates: bool = False,
              check_every: int = 1,
              partition: Optional[BlockPartition] = None) -> FlexaResult:
    """
    Inexact flexible parallel SCA.

    At every iteration a block set ``S^k`` is chosen, the best responses of
    its blocks are computed in parallel against the iteration-start
    snapshot, and ``x^{k+1} = x^k + gamma^k (z_hat^k - x^k)``.

    Parameters
    ----------
    problem : CompositeProblem
    surrogates : SurrogateFamily
    select : SelectionRule
        Partitioned kinds are forwarded to :func:`flexa_parallel_cyclic`.
    schedule : Schedule
        Constant, diminishing or Armijo. With a nonseparable ``G`` the
        step is capped at ``1/n``.
    inexact : InexactPolicy, optional
    max_iters : int
    stop_tol : float
        Stop when ``max_i ||x_hat_i(x^k) - x_i^k|| <= stop_tol``.
    x0 : ndarray, optional
    workers : int
        Threads used for the block solves.
    seed : int
        Seed of the run generator (random selections).
    record_iterates : bool
    check_every : int
        For selections that do not need every best response, the full
        stopping test runs every ``check_every`` iterations.
    partition : BlockPartition, optional
        Overrides ``problem.partition``.

    Returns
    -------
    FlexaResult
    """
    if partition is not None:
        problem = replace(problem, partition=partition)
    part = problem.partition
    n = part.n
    select.validate(n)
    if select.kind.startswith("partitioned"):
        return flexa_parallel_cyclic(problem, surrogates, select.workers, schedule,
                                     inexact, max_iters, stop_tol, x0, workers,
                                     greedy_rho=select.rho if "greedy" in select.kind else None,
                                     record_iterates=record_iterates)
    inexact = inexact or InexactPolicy()
    rng = np.random.default_rng(seed)
    cap = 1.0 if problem.separable_G else 1.0 / n
    x = np.zeros(problem.dim) if x0 is None else np.array(x0, dtype=float)
    x = problem.project(x, None)
    groups = select.cyclic_groups(n) if select.kind == "essentially_cyclic" else None
    res = FlexaResult(x=x)
    all_blocks = np.arange(n)
    v = problem.value(x)
    with _pool(workers) as pool:
        for k in range(max_iters):
            ctx = surrogates.prepare(x) if surrogates.prepare is not None else None
            needs_all = select.kind in ("all", "greedy")
            if select.kind == "random_greedy" or select.kind == "random":
                pool_set = sample_blocks(select.sampling, n, rng)
            elif select.kind == "essentially_cyclic":
                pool_set = np.asarray(sorted(groups[k % len(groups)]))
            else:
                pool_set = all_blocks
            check = needs_all or (k % check_every == 0)
            solve_set = all_blocks if check else pool_set
            xs = x
            xhat = _pmap(pool, lambda i: np.asarray(
                surrogates.best_response(i, xs, ctx), dtype=float), solve_set)
            xhat = dict(zip(solve_set.tolist(), xhat))
            E = {i: float(np.linalg.norm(xhat[i] - x[part.slice(i)])) for i in xhat}
            fp = max(E.values()) if check else float("nan")
            if check and fp <= stop_tol:
                res.converged = True
                res.reports.append(MeritReport(v, fp, 0.0, 0.0))
                break
            if select.kind in ("greedy", "random_greedy"):
                cand = pool_set if select.kind == "random_greedy" else all_blocks
                S = cand[greedy_select([E[i] for i in cand], select.rho)]
            else:
                S = pool_set
            eps = inexact.tolerance(k)
            z = {}
            for i in S:
                if inexact.solver is not None:
                    zi = np.asarray(inexact.solver(int(i), x, eps), dtype=float)
                    if np.linalg.norm(zi - xhat[i]) > eps + 1e-12:
                        raise ContractViolation(f"block {i}: inexact solution outside tolerance",
                                                invariant="inexact-accuracy")
                else:
                    zi = xhat[i]
                z[int(i)] = zi
            direction = np.zeros_like(x)
            for i, zi in z.items():
                sl = part.slice(i)
                direction[sl] = zi - x[sl]
            need_grad = inexact.descent_check or schedule.kind == "armijo"
            if need_grad:
                grad = ctx if (ctx is not None and np.shape(ctx) == x.shape) else problem.grad_F(x)
                Gx = float(problem.eval_G(x))
            if inexact.descent_check:
                for i, zi in z.items():
                    _descent_check(problem, surrogates, x, grad, i, zi, Gx, max(1.0, abs(v)))
            if schedule.kind == "armijo":
                dec = float(grad @ direction) + sum(
                    _g_of_block(problem, x, i, zi) - Gx for i, zi in z.items())
                gamma = armijo_linesearch(problem, x, direction, dec,
                                          alpha=schedule.params["alpha"],
                                          delta=schedule.params["delta"],
                                          gamma0=min(schedule.gamma0, cap), v_x=v)
            else:
                gamma = min(schedule.gamma, cap)
            x_new = x + gamma * direction
            v_new = problem.value(x_new)
            res.reports.append(MeritReport(v_new, fp, relative_descent(v, v_new),
                                           iterate_delta(x, x_new)))
            res.gammas.append(gamma)
            res.selected.append(np.asarray(S))
            if record_iterates:
                res.iterates.append(x_new.copy())
            x, v = x_new, v_new
            res.iterations = k + 1
            if schedule.kind != "armijo":
                next_stepsize(schedule)
    res.x = x
    return res


def flexa_random_greedy(problem: CompositeProblem, surrogates: SurrogateFamily,
                        sampling: Sampling, rho: float, schedule: Schedule,
                        inexact: Optional[InexactPolicy] = None,
                        max_iters: int = 1000, stop_tol: float = 1e-6,
                        x0=None, workers: int = 1, seed: int = 0,
                        check_every: int = 1, record_iterates: bool = False) -> FlexaResult:
    """
    Random-greedy hybrid: draw a pool, keep the pool blocks whose error
    bound is within ``rho`` of the pool maximum, update them in parallel.
    """
    rule = SelectionRule("random_greedy", rho=rho, sampling=sampling)
    return flexa_run(problem, surrogates, rule, schedule, inexact, max_iters,
                     stop_tol, x0, workers, seed, record_iterates, check_every)


def flexa_parallel_cyclic(problem: CompositeProblem, surrogates: SurrogateFamily,
                          worker_partition: Sequence[Sequence[int]],
                          schedule: Schedule, inexact: Optional[InexactPolicy] = None,
                          max_iters: int = 1000, stop_tol: float = 1e-6,
                          x0=None, workers: int = 1,
                          greedy_rho: Optional[float] = None,
                          record_iterates: bool = False) -> FlexaResult:
    """
    Parallel-cyclic hybrid.

    Worker ``p`` sweeps its blocks ``I_p`` in order. Block ``i`` solves
    its model at the point made of the worker's already updated blocks,
    its own not yet visited blocks, and the iteration-start values of all
    other workers' blocks; it then moves by ``gamma^k`` toward the
    solution. With ``greedy_rho`` only the blocks whose error bound at
    ``x^k`` reaches ``greedy_rho`` times the global maximum are swept.

    ``worker_partition`` is part of the algorithm; ``workers`` only sets
    how many threads execute the sweeps.
    """
    part = problem.partition
    n = part.n
    _check_partition(worker_partition, n)
    if schedule.kind == "armijo":
        raise ConfigurationError("line search is not defined for the cyclic hybrids")
    inexact = inexact or InexactPolicy()
    cap = 1.0 if problem.separable_G else 1.0 / n
    x = np.zeros(problem.dim) if x0 is None else np.array(x0, dtype=float)
    x = problem.project(x, None)
    res = FlexaResult(x=x)
    v = problem.value(x)
    groups = [list(map(int, g)) for g in worker_partition]
    with _pool(workers) as pool:
        for k in range(max_iters):
            ctx = surrogates.prepare(x) if surrogates.prepare is not None else None
            xs = x
            xhat = _pmap(pool, lambda i: np.asarray(
                surrogates.best_response(i, xs, ctx), dtype=float), range(n))
            E = np.array([np.linalg.norm(xhat[i] - x[part.slice(i)]) for i in range(n)])
            fp = float(E.max())
            if fp <= stop_tol:
                res.converged = True
                res.reports.append(MeritReport(v, fp, 0.0, 0.0))
                break
            if greedy_rho is not None:
                chosen = set(greedy_select(E, greedy_rho).tolist())
                sweeps = [[i for i in g if i in chosen] for g in groups]
            else:
                sweeps = groups
            gamma = min(schedule.gamma, cap)
            eps = inexact.tolerance(k)

            def sweep(blocks, snap=x):
                xp = snap.copy()
                for i in blocks:
                    sl = part.slice(i)
                    if inexact.solver is not None:
                        zi = np.asarray(inexact.solver(i, xp, eps), dtype=float)
                    else:
                        zi = np.asarray(surrogates.best_response(i, xp, None), dtype=float)
                    xp[sl] = xp[sl] + gamma * (zi - xp[sl])
                return xp

            outs = _pmap(pool, sweep, sweeps)
            x_new = x.copy()
            for blocks, xp in zip(sweeps, outs):
                for i in blocks:
                    sl = part.slice(i)
                    x_new[sl] = xp[sl]
            v_new = problem.value(x_new)
            res.reports.append(MeritReport(v_new, fp, relative_descent(v, v_new),
                                           iterate_delta(x, x_new)))
            res.gammas.append(gamma)
            res.selected.append(np.array(sorted(i for s in sweeps for i in s)))
            if record_iterates:
                res.iterates.append(x_new.copy())
            x, v = x_new, v_new
            res.iterations = k + 1
            next_stepsize(schedule)
    res.x = x
    return res


#%% SCALAR-BLOCK DRIVERS

def l1_stationarity_merit(grad: np.ndarray, x: np.ndarray, lam: float) -> np.ndarray:
    """``M(x) = grad F(x) - Pi_[-lam, lam](grad F(x) - x)``; zero exactly at stationary points."""
    return grad - np.clip(grad - x, -lam, lam)


@dataclass
class AdaptiveTau:
    """
    Proximal-weight heuristic for scalar-block drivers.

    All weights double (and the iteration is discarded) when the objective
    does not decrease; they halve after ``patience`` consecutive decreases
    and once when the error measure first drops below ``re_threshold``.
    At most ``max_changes`` changes are made.
    """

    tau: float
    patience: int = 10
    re_threshold: float = 1e-2
    max_changes: int = 100
    changes: int = 0
    streak: int = 0
    crossed: bool = False

    def on_increase(self) -> bool:
        """Returns ``True`` when the weights were doubled (iteration discarded)."""
        self.streak = 0
        if self.changes >= self.max_changes:
            return False
        self.tau *= 2.0
        self.changes += 1
        return True

    def on_decrease(self, re: float):
        self.streak += 1
        halve = self.streak >= self.patience
        if not self.crossed and re <= self.re_threshold:
            self.crossed = True
            halve = True
        if halve and self.changes < self.max_changes:
            self.tau /= 2.0
            self.changes += 1
            self.streak = 0


def guarded_step(gamma: float, re: float, theta: float = 1e-7) -> float:
    """``gamma (1 - min(1, 1e-4 / re) theta gamma)``; ``re = 0`` leaves ``gamma``."""
    if re <= 0:
        return gamma
    return gamma * (1.0 - min(1.0, 1e-4 / re) * theta * gamma)


@dataclass
class ScalarRunResult:
    """Outcome of :func:`flexa_lasso` / :func:`flexa_logreg`; ``trace`` rows are dicts."""

    x: np.ndarray
    trace: List[dict] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    tau: float = float("nan")


def _chunks(m, workers):
    return [c for c in np.array_split(np.arange(m), max(1, int(workers))) if c.size]


def _groups(m, n_groups):
    return [c.astype(np.int64) for c in np.array_split(np.arange(m), n_groups) if c.size]


def flexa_lasso(inst, sigma: float = 0.0, max_iters: int = 5000, tol: float = 1e-6,
                x0=None, workers: int = 1, mode: str = "jacobi", n_groups: int = 8,
                tau0: Optional[float] = None, adaptive: bool = True,
                gamma0: float = 0.9, theta: float = 1e-7) -> ScalarRunResult:
    """
    FLEXA for ``0.5 ||z - A x||^2 + lam ||x||_1`` with scalar blocks.

    Parameters
    ----------
    inst
        Object with ``A``, ``z``, ``lam`` and optionally ``v_star``.
    sigma : float
        Greedy fraction: blocks with ``E_i >= sigma max E`` are updated
        (``sigma = 0`` updates all of them).
    mode : {"jacobi", "gauss_jacobi"}
        ``gauss_jacobi`` sweeps the selected blocks of each of ``n_groups``
        fixed column groups sequentially (compiled kernel), the groups in
        parallel.
    tol : float
        Target on ``re(x) = (V - V*)/V*`` when ``v_star`` is known,
        otherwise on ``||M(x)||_inf``.
    workers : int
        Threads; results do not depend on it.
    tau0 : float, optional
        Initial proximal weight, ``tr(A^T A) / (2m)`` by default.
    adaptive : bool
        Use :class:`AdaptiveTau`.
    gamma0, theta : float
        Initial step and parameter of the guarded diminishing rule.
    """
    if mode not in ("jacobi", "gauss_jacobi"):
        raise ConfigurationError(f"unknown mode {mode!r}")
    if not 0.0 <= sigma <= 1.0:
        raise ConfigurationError("sigma must lie in [0, 1]")
    A = np.asfortranarray(inst.A, dtype=float)
    z = np.asarray(inst.z, dtype=float)
    lam = float(inst.lam)
    v_star = getattr(inst, "v_star", None)
    q, m = A.shape
    colsq = np.einsum("ij,ij->j", A, A)
    tau = AdaptiveTau(float(tau0) if tau0 is not None else colsq.sum() / (2.0 * m))
    x = np.zeros(m) if x0 is None else np.array(x0, dtype=float)
    r = z - A @ x

    def V_of(x, r):
        return 0.5 * float(r @ r) + lam * float(np.abs(x).sum())

    def err(v, x, g):
        if v_star is not None:
            return (v - v_star) / v_star
        return float(np.abs(l1_stationarity_merit(-g, x, lam)).max())

    v = V_of(x, r)
    gamma = gamma0
    res = ScalarRunResult(x=x)
    chunks = _chunks(m, workers)
    groups = _groups(m, n_groups)
    with _pool(workers) as pool:
        for k in range(max_iters):
            g = A.T @ r
            re = err(v, x, g)
            t = tau.tau

            def br(c, g=g, x=x, t=t):
                xh = soft_threshold_vec(g[c] + (colsq[c] + t) * x[c], lam) / (colsq[c] + t)
                return xh, np.abs(xh - x[c])

            parts = _pmap(pool, br, chunks)
            xhat = np.concatenate([p[0] for p in parts])
            E = np.concatenate([p[1] for p in parts])
            M = float(E.max())
            res.trace.append(dict(iteration=k, objective=v, re=re, merit=M,
                                  stepsize=gamma, selected=0, tau=t))
            if re <= tol:
                res.converged = True
                break
            sel = E >= sigma * M if sigma > 0 else np.ones(m, dtype=bool)
            res.trace[-1]["selected"] = int(sel.sum())
            if mode == "jacobi":
                x_try = x.copy()
                x_try[sel] += gamma * (xhat[sel] - x[sel])
                r_try = z - A @ x_try
            else:
                taus = np.full(m, t)
                sweeps = [grp[sel[grp]] for grp in groups]

                def sweep(idx, x=x, r=r):
                    xp, rp = x.copy(), r.copy()
                    lasso_cyclic_sweep(A, xp, rp, idx, taus, colsq, lam, gamma)
                    return xp

                outs = _pmap(pool, sweep, sweeps)
                x_try = x.copy()
                for idx, xp in zip(sweeps, outs):
                    x_try[idx] = xp[idx]
                r_try = z - A @ x_try
            v_try = V_of(x_try, r_try)
            if adaptive and v_try > v:
                if tau.on_increase():
                    continue
            elif adaptive:
                tau.on_decrease(err(v_try, x_try, g) if v_star is not None else re)
            x, r, v = x_try, r_try, v_try
            gamma = guarded_step(gamma, max(err(v, x, g), 0.0) if v_star is not None else re, theta)
        res.iterations = k + 1 if not res.converged else k
    res.x, res.tau = x, tau.tau
    return res


def flexa_logreg(inst, sigma: float = 0.0, max_iters: int = 2000, tol: float = 1e-6,
                 x0=None, workers: int = 1, mode: str = "jacobi", n_groups: int = 8,
                 tau0: Optional[float] = None, adaptive: bool = True,
                 gamma0: float = 0.9, theta: float = 1e-7) -> ScalarRunResult:
    """
    FLEXA for l1-regularized logistic regression with scalar blocks.

    Block ``i`` minimizes the second-order model
    ``grad_i F (u - x_i) + (H_ii + tau)/2 (u - x_i)^2 + lam |u|`` whose
    solution is ``S_{lam t}(x_i - t grad_i F)`` with ``t = 1/(tau + H_ii)``.
    The error measure driving the step rule and the stopping test is
    ``||M(x)||_inf``. ``inst`` provides ``Z``, ``w``, ``lam`` and ``scale``
    (``1`` or ``1/q``). Other parameters as in :func:`flexa_lasso`.
    """
    if mode not in ("jacobi", "gauss_jacobi"):
        raise ConfigurationError(f"unknown mode {mode!r}")
    Z = np.asfortranarray(inst.Z, dtype=float)
    w = np.asarray(inst.w, dtype=float)
    lam = float(inst.lam)
    scale = float(getattr(inst, "scale", 1.0))
    q, m = Z.shape
    tau = AdaptiveTau(float(tau0) if tau0 is not None
                      else float(np.einsum("ij,ij->", Z, Z)) / (2.0 * m))
    x = np.zeros(m) if x0 is None else np.array(x0, dtype=float)
    margin = w * (Z @ x)
    Zsq = Z * Z

    def V_of(x, margin):
        return scale * float(np.logaddexp(0.0, -margin).sum()) + lam * float(np.abs(x).sum())

    def derivs(margin):
        s = _sigmoid(-margin)
        g = -scale * (Z.T @ (w * s))
        h = scale * (Zsq.T @ (s * (1.0 - s)))
        return g, h

    v = V_of(x, margin)
    gamma = gamma0
    res = ScalarRunResult(x=x)
    chunks = _chunks(m, workers)
    groups = _groups(m, n_groups)
    with _pool(workers) as pool:
        for k in range(max_iters):
            g, h = derivs(margin)
            merit = float(np.abs(l1_stationarity_merit(g, x, lam)).max())
            t_ = tau.tau

            def br(c, g=g, h=h, x=x, t_=t_):
                t = 1.0 / (t_ + h[c])
                xh = soft_threshold_vec(x[c] - t * g[c], lam * t)
                return xh, np.abs(xh - x[c])

            parts = _pmap(pool, br, chunks)
            xhat = np.concatenate([p[0] for p in parts])
            E = np.concatenate([p[1] for p in parts])
            M = float(E.max())
            res.trace.append(dict(iteration=k, objective=v, re=merit, merit=M,
                                  stepsize=gamma, selected=0, tau=t_))
            if merit <= tol:
                res.converged = True
                break
            sel = E >= sigma * M if sigma > 0 else np.ones(m, dtype=bool)
            res.trace[-1]["selected"] = int(sel.sum())
            if mode == "jacobi":
                x_try = x.copy()
                x_try[sel] += gamma * (xhat[sel] - x[sel])
            else:
                taus = np.full(m, t_)
                sweeps = [grp[sel[grp]] for grp in groups]

                def sweep(idx, x=x, margin=margin):
                    xp, mp = x.copy(), margin.copy()
                    logreg_cyclic_sweep(Z, w, xp, mp, idx, taus, lam, gamma, scale)
                    return xp

                outs = _pmap(pool, sweep, sweeps)
                x_try = x.copy()
                for idx, xp in zip(sweeps, outs):
                    x_try[idx] = xp[idx]
            margin_try = w * (Z @ x_try)
            v_try = V_of(x_try, margin_try)
            if adaptive and v_try > v:
                if tau.on_increase():
                    continue
            elif adaptive:
                tau.on_decrease(merit)
            x, margin, v = x_try, margin_try, v_try
            gamma = guarded_step(gamma, merit, theta)
        res.iterations = k + 1 if not res.converged else k
    res.x, res.tau = x, tau.tau
    return res


def _sigmoid(u):
    """Logistic function without overflow."""
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out
