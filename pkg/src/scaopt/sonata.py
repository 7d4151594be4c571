"""
Distributed SCA over time-varying digraphs with gradient tracking.

Every agent keeps a copy ``x_i`` of the decision vector, a tracker ``y_i``
of the average gradient and a push-sum weight ``phi_i``. One iteration is
a local strongly convex solve, a damped move toward its solution, and a
communication round that mixes ``x`` and ``y`` through column-stochastic
weights. Both the x-mixing and the y-tracking can be done
adapt-then-combine (``atc``) or combine-and-adapt (``caa``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .core import CompositeProblem, Schedule, _identity_project, next_stepsize
from .errors import ConfigurationError, ContractViolation
from .flexa import _pmap, _pool
from .network import GraphSequence, WeightMatrix, build_weights


#%% AGENTS

@dataclass
class AgentProblem:
    """
    Local data of one agent.

    Parameters
    ----------
    f, grad : callable
        Local cost and gradient.
    solve : callable
        ``(x_i, pi) -> argmin_{u in X} f~_i(u | x_i) + pi^T (u - x_i) + G(u)``.
    tau : float
        Strong-convexity constant of the local model.
    surrogate_value, surrogate_grad : callable, optional
        ``(u, x_i)`` giving ``f~_i(u | x_i)`` and its gradient in ``u``.
    """

    f: Callable
    grad: Callable
    solve: Callable
    tau: float
    surrogate_value: Optional[Callable] = None
    surrogate_grad: Optional[Callable] = None


def linearized_agent(f, grad, tau: float, problem: Optional[CompositeProblem] = None) -> AgentProblem:
    """
    Agent with model ``f_i(x_i) + grad f_i(x_i)^T (u - x_i) + tau/2 ||u - x_i||^2``.

    The solve is ``prox_{G/tau}(x_i - (grad f_i(x_i) + pi) / tau)`` over
    ``X``; with ``tau = I``, ``G = 0`` and no constraints it is
    ``x_i - y_i``.
    """
    if tau <= 0:
        raise ConfigurationError("tau must be positive")

    def solve(x, pi):
        v = x - (grad(x) + pi) / tau
        return v if problem is None else problem.prox_G(v, 1.0 / tau, None)

    def value(u, x):
        d = u - x
        return f(x) + float(grad(x) @ d) + 0.5 * tau * float(d @ d)

    def sgrad(u, x):
        return grad(x) + tau * (u - x)

    return AgentProblem(f, grad, solve, tau, value, sgrad)


def huber_agents(inst, variant: str, tau: float) -> List[AgentProblem]:
    """Agents of a :class:`~scaopt.problems.HuberInstance` (``linear`` or ``quadratic`` model)."""
    from .problems import (huber_surrogate_grad, huber_surrogate_solve,
                           huber_surrogate_value)
    out = []
    for i in range(inst.I):
        out.append(AgentProblem(
            f=lambda x, i=i: inst.f_i(i, x),
            grad=lambda x, i=i: inst.grad_f_i(i, x),
            solve=lambda x, pi, i=i: huber_surrogate_solve(inst, i, x, pi, variant, tau),
            tau=tau,
            surrogate_value=lambda u, x, i=i: huber_surrogate_value(inst, i, u, x, variant, tau),
            surrogate_grad=lambda u, x, i=i: huber_surrogate_grad(inst, i, u, x, variant, tau)))
    return out


def localization_agents(inst, variant: str, tau: float) -> List[AgentProblem]:
    """Agents of a :class:`~scaopt.problems.LocalizationInstance` (``linear`` or ``partial_convex``)."""
    from .problems import (localization_surrogate_grad, localization_surrogate_solve,
                           localization_surrogate_value)
    out = []
    for i in range(inst.I):
        out.append(AgentProblem(
            f=lambda x, i=i: inst.f_i(i, x),
            grad=lambda x, i=i: inst.grad_f_i(i, x),
            solve=lambda x, pi, i=i: localization_surrogate_solve(inst, i, x, pi, variant, tau),
            tau=tau,
            surrogate_value=lambda u, x, i=i: localization_surrogate_value(inst, i, u, x, variant, tau),
            surrogate_grad=lambda u, x, i=i: localization_surrogate_grad(inst, i, u, x, variant, tau)))
    return out


#%% CONFIG AND STATE

WeightSource = Union[None, WeightMatrix, Callable[[int], WeightMatrix]]


@dataclass
class SonataConfig:
    """
    Parameters
    ----------
    schedule : Schedule
        Diminishing (recursive or ratio) or constant step-size.
    graph : GraphSequence
    x_variant, y_variant : {"atc", "caa"}
        Default: adapt-then-combine on ``x`` (keeps iterates feasible),
        combine-and-adapt on ``y``.
    weight_rule : str
        Rule passed to :func:`~scaopt.network.build_weights`.
    weights : WeightMatrix or callable, optional
        Overrides ``graph``/``weight_rule``: a fixed matrix or ``k -> matrix``.
    max_iters : int
    tol : float
        Stop when ``M = max(J^2, D^2) <= tol``.
    workers : int
        Threads for the local solves.
    """

    schedule: Schedule
    graph: Optional[GraphSequence] = None
    x_variant: str = "atc"
    y_variant: str = "caa"
    weight_rule: str = "push_sum"
    weights: WeightSource = None
    max_iters: int = 1000
    tol: float = 0.0
    workers: int = 1

    def __post_init__(self):
        if self.x_variant not in ("atc", "caa") or self.y_variant not in ("atc", "caa"):
            raise ConfigurationError("variants must be 'atc' or 'caa'")
        if self.graph is None and self.weights is None:
            raise ConfigurationError("need a graph sequence or explicit weights")
        if self.schedule.kind == "armijo":
            raise ConfigurationError("line search is not available in the distributed setting")
        if self.max_iters < 0:
            raise ConfigurationError("max_iters must be nonnegative")

    def weights_at(self, k: int) -> WeightMatrix:
        if isinstance(self.weights, WeightMatrix):
            return self.weights
        if callable(self.weights):
            return self.weights(k)
        return build_weights(self.graph.step(k), self.weight_rule)


@dataclass
class SonataState:
    """Per-agent rows of ``x`` and ``y``, weights ``phi`` and cached local gradients."""

    x: np.ndarray
    y: np.ndarray
    phi: np.ndarray
    grads: np.ndarray

    @property
    def I(self):
        return self.x.shape[0]

    def x_bar(self):
        """``(1/I) sum_i phi_i x_i``."""
        return (self.phi @ self.x) / self.I

    def tracking_gap(self) -> float:
        """``max |sum_i phi_i y_i - sum_i grad f_i(x_i)|``."""
        a = self.phi[:, None] * self.y
        return float(np.max(np.abs(
            [math.fsum(a[:, c]) - math.fsum(self.grads[:, c]) for c in range(a.shape[1])])))


def sonata_init(agents: Sequence[AgentProblem], x0) -> SonataState:
    """``phi = 1`` and ``y_i = grad f_i(x_i)``; ``x0`` is one vector or one row per agent."""
    I = len(agents)
    x0 = np.asarray(x0, dtype=float)
    X = np.tile(x0, (I, 1)) if x0.ndim == 1 else np.array(x0, dtype=float)
    if X.shape[0] != I:
        raise ConfigurationError("x0 needs one row per agent")
    G = np.array([a.grad(X[i]) for i, a in enumerate(agents)])
    return SonataState(X, G.copy(), np.ones(I), G)


#%% STEPS

def sonata_local_step(agent: AgentProblem, x_i: np.ndarray, y_i: np.ndarray, I: int,
                      gamma: float, grad_i: Optional[np.ndarray] = None):
    """
    Solve the local model with aggregate term ``I y_i - grad f_i(x_i)`` and move.

    Returns
    -------
    x_half : ndarray
        ``x_i + gamma (x_tilde - x_i)``.
    x_tilde : ndarray
    """
    if not 0.0 < gamma <= 1.0:
        raise ConfigurationError("step-size must lie in (0, 1]")
    g = agent.grad(x_i) if grad_i is None else grad_i
    x_tilde = np.asarray(agent.solve(x_i, I * y_i - g), dtype=float)
    return x_i + gamma * (x_tilde - x_i), x_tilde


def sonata_communicate(state: SonataState, A: WeightMatrix, x_half: np.ndarray,
                       grads_new: np.ndarray, x_variant: str = "atc",
                       y_variant: str = "caa") -> SonataState:
    """
    Mixing round.

    ``phi+ = A phi``. ATC on ``x`` averages the moved points ``x_half``;
    CAA averages the old ``x`` and adds the own move scaled by
    ``phi_i / phi_i+``. CAA on ``y`` averages ``phi y`` and adds the
    gradient increment; ATC mixes the increments too. Both keep
    ``sum phi+ y+ = sum grads_new``.
    """
    if A.tag not in ("column", "doubly"):
        raise ContractViolation("mixing needs column-stochastic weights",
                                invariant="stochasticity-tag")
    W, phi = A.W, state.phi
    phi_new = W @ phi
    if np.any(phi_new <= 0) or not np.all(np.isfinite(phi_new)):
        raise ContractViolation("push-sum weight left the positive orthant",
                                invariant="phi-positive")
    inv = 1.0 / phi_new[:, None]
    x_new = _mix_x(state, W, phi_new, x_half, x_variant)
    dg = grads_new - state.grads
    if y_variant == "caa":
        y_new = inv * (W @ (phi[:, None] * state.y) + dg)
    else:
        y_new = inv * (W @ (phi[:, None] * state.y + dg))
    return SonataState(x_new, y_new, phi_new, grads_new)


#%% MERITS

def merit_J(problem: CompositeProblem, x_bar: np.ndarray) -> float:
    """``||x - prox_G(x - grad F(x))||`` over ``X`` with unit proximal weight."""
    return problem.prox_residual(np.asarray(x_bar, dtype=float), 1.0)


def merit_D(state: SonataState) -> float:
    """``||x - 1 (x) x_bar||``."""
    return float(np.linalg.norm(state.x - state.x_bar()[None, :]))


@dataclass
class SonataResult:
    state: SonataState
    trace: List[dict] = field(default_factory=list)
    iterates: List[np.ndarray] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    def column(self, name):
        return np.array([r[name] for r in self.trace])


def _record(problem, state, k, gamma):
    xb = state.x_bar()
    J = merit_J(problem, xb)
    D = merit_D(state)
    g_avg = state.grads.mean(axis=0)
    return dict(round=k, messages=2 * k, J=J, D=D, M=max(J * J, D * D),
                mean_objective=problem.value(xb), stepsize=gamma,
                consensus_err_x=float(np.max(np.linalg.norm(state.x - xb, axis=1))),
                tracking_err_y=float(np.max(np.linalg.norm(state.y - g_avg, axis=1))))


def sonata_run(agents: Sequence[AgentProblem], problem: CompositeProblem,
               config: SonataConfig, x0, check_invariants: bool = True,
               invariant_tol: float = 1e-10, record_iterates: bool = False) -> SonataResult:
    """
    SONATA.

    Parameters
    ----------
    agents : sequence of AgentProblem
    problem : CompositeProblem
        The global problem ``sum_i f_i + G`` over ``X``; used for the
        stationarity merit and the feasibility checks.
    config : SonataConfig
    x0 : ndarray
        Feasible start (one vector, or one row per agent).
    check_invariants : bool
        Verify at every iteration that the tracking identity holds to
        ``invariant_tol`` (scaled) and, for ATC on ``x``, that every local
        copy is feasible.
    record_iterates : bool
        Keep the local copies ``x`` (``I x m``) of every iteration.

    Returns
    -------
    SonataResult
        ``trace`` has one row per iteration with ``round``, ``messages``
        (two broadcasts per iteration), ``J``, ``D``, ``M``,
        ``mean_objective``, ``stepsize``, ``consensus_err_x`` and
        ``tracking_err_y``.
    """
    I = len(agents)
    constrained = problem.project is not _identity_project
    if config.x_variant == "caa" and constrained:
        raise ConfigurationError("combine-and-adapt x-updates are only available without constraints")
    if config.schedule.kind == "constant":
        warnings.warn("constant step-size: convergence holds only for a small enough value",
                      RuntimeWarning, stacklevel=2)
    sched = config.schedule.copy()
    state = sonata_init(agents, x0)
    if constrained and check_invariants:
        _check_feasible(problem, state.x)
    res = SonataResult(state)
    with _pool(config.workers) as pool:
        for k in range(config.max_iters + 1):
            rec = _record(problem, state, k, sched.gamma)
            res.trace.append(rec)
            if record_iterates:
                res.iterates.append(state.x.copy())
            if rec["M"] <= config.tol or k == config.max_iters:
                res.converged = rec["M"] <= config.tol
                break
            gamma = sched.gamma
            st = state
            out = _pmap(pool, lambda i: sonata_local_step(
                agents[i], st.x[i], st.y[i], I, gamma, st.grads[i])[0], range(I))
            x_half = np.array(out)
            A = config.weights_at(k)
            if A.W.shape != (I, I):
                raise ConfigurationError("weight matrix does not match the agent count")
            x_new = _mix_x(state, A.W, A.W @ state.phi, x_half, config.x_variant)
            grads_new = np.array(_pmap(pool, lambda i: agents[i].grad(x_new[i]), range(I)))
            state = sonata_communicate(state, A, x_half, grads_new,
                                       config.x_variant, config.y_variant)
            if check_invariants:
                gap = state.tracking_gap()
                scale = max(1.0, float(np.max(np.abs(state.grads))))
                if gap > invariant_tol * scale:
                    raise ContractViolation(f"tracking identity off by {gap:.3e}",
                                            invariant="tracking-sum")
                if constrained:
                    _check_feasible(problem, state.x)
            res.iterations = k + 1
            next_stepsize(sched)
    res.state = state
    return res


def _mix_x(state, W, phi_new, x_half, variant):
    phi = state.phi
    if variant == "atc":
        return (W @ (phi[:, None] * x_half)) / phi_new[:, None]
    return (W @ (phi[:, None] * state.x)) / phi_new[:, None] \
        + (phi / phi_new)[:, None] * (x_half - state.x)


def _check_feasible(problem, X, tol=1e-12):
    for row in X:
        if np.linalg.norm(problem.project(row, None) - row) > tol:
            raise ContractViolation("local copy left the feasible set",
                                    invariant="feasibility")


#%% SPECIAL CASES

def aug_dgm(grads: Sequence[Callable], W: np.ndarray, x0: np.ndarray, gamma: float,
            iters: int) -> List[np.ndarray]:
    """
    Direct transcription of the Aug-DGM recursion on a static doubly
    stochastic ``W``: ``x+ = W (x - gamma y)``, ``y+ = W (y + g+ - g)``.
    Returns the ``x`` iterates (``iters + 1`` arrays of shape ``(I, m)``).
    """
    X = np.array(x0, dtype=float)
    g = np.array([gr(X[i]) for i, gr in enumerate(grads)])
    Y = g.copy()
    out = [X.copy()]
    for _ in range(iters):
        X = W @ (X - gamma * Y)
        g_new = np.array([gr(X[i]) for i, gr in enumerate(grads)])
        Y = W @ (Y + g_new - g)
        g = g_new
        out.append(X.copy())
    return out


def diging(grads: Sequence[Callable], W: Union[np.ndarray, Callable[[int], np.ndarray]],
           x0: np.ndarray, gamma: float, iters: int) -> List[np.ndarray]:
    """
    Direct transcription of DIGing: ``x+ = W x - gamma y``,
    ``y+ = W y + g+ - g``. ``W`` may depend on the iteration.
    """
    Wk = W if callable(W) else (lambda k: W)
    X = np.array(x0, dtype=float)
    g = np.array([gr(X[i]) for i, gr in enumerate(grads)])
    Y = g.copy()
    out = [X.copy()]
    for k in range(iters):
        M = Wk(k)
        X = M @ X - gamma * Y
        g_new = np.array([gr(X[i]) for i, gr in enumerate(grads)])
        Y = M @ Y + g_new - g
        g = g_new
        out.append(X.copy())
    return out
