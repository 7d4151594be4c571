"""
Time-varying digraphs, compliant weight matrices and the consensus family.

Edge ``(j, i)`` means that node ``j`` can send to node ``i``; self-loops
are implicit. Weight matrices follow the reverse-link convention:
``w_ij`` is the weight node ``i`` gives to what it receives from ``j``.

The protocols are the plain weighted average, the condensed push-sum,
its tracking form for time-varying signals, and the perturbed condensed
push-sum that covers them all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConfigurationError, ContractViolation

STOCHASTIC_TOL = 1e-12


#%% GRAPHS

@dataclass(frozen=True)
class GraphStep:
    """
    Digraph on ``I`` nodes with implicit self-loops.

    Parameters
    ----------
    I : int
    edges : array_like of shape (E, 2)
        Directed pairs ``(j, i)``: ``j`` sends to ``i``. Self-pairs and
        duplicates are dropped.
    """

    I: int
    edges: tuple = ()

    def __post_init__(self):
        if self.I < 1:
            raise ConfigurationError("a graph needs at least one node")
        pairs = set()
        for e in self.edges:
            j, i = int(e[0]), int(e[1])
            if not (0 <= i < self.I and 0 <= j < self.I):
                raise ConfigurationError(f"edge {(j, i)} out of range")
            if i != j:
                pairs.add((j, i))
        object.__setattr__(self, "edges", tuple(sorted(pairs)))

    def in_adjacency(self) -> np.ndarray:
        """Boolean ``M[i, j]`` true when ``j`` is an in-neighbor of ``i`` (self included)."""
        M = np.eye(self.I, dtype=bool)
        for j, i in self.edges:
            M[i, j] = True
        return M

    @property
    def out_degrees(self) -> np.ndarray:
        """``d_j``: number of out-neighbors of ``j``, self included."""
        return self.in_adjacency().sum(axis=0)

    @property
    def degrees(self) -> np.ndarray:
        """Neighbor counts (self included) of an undirected graph."""
        return self.in_adjacency().sum(axis=1)

    def is_symmetric(self) -> bool:
        M = self.in_adjacency()
        return bool(np.array_equal(M, M.T))

    def symmetrized(self) -> "GraphStep":
        """Undirected graph with every edge in both directions."""
        return GraphStep(self.I, self.edges + tuple((i, j) for j, i in self.edges))

    def strongly_connected(self) -> bool:
        return _strongly_connected(self.in_adjacency())


def _strongly_connected(M):
    if M.shape[0] == 1:
        return True
    n, _ = connected_components(csr_matrix(M.astype(np.int8)), directed=True,
                                connection="strong")
    return n == 1


def union(steps: Sequence[GraphStep]) -> GraphStep:
    I = steps[0].I
    return GraphStep(I, tuple(e for s in steps for e in s.edges))


@dataclass
class GraphSequence:
    """
    Sequence of communication graphs ``G^0, G^1, ...``.

    Parameters
    ----------
    kind : {"static", "permuted_ring_plus_random", "custom"}
        ``permuted_ring_plus_random`` draws at every step a directed ring
        over a random permutation of the nodes plus one extra out-edge per
        node; step ``k`` is seeded by ``(seed, k)``, so every step is
        strongly connected (``B = 1``) and reproducible in isolation.
        ``custom`` cycles through ``steps``.
    I : int
    seed : int
    graph : GraphStep, optional
        The graph of a static sequence.
    steps : list of GraphStep, optional
    B : int
        Window over which the union of consecutive graphs is strongly
        connected; verified on a sampled window for custom sequences.
    symmetric : bool
        Return the symmetrized graph at every step (for doubly
        stochastic weights).
    """

    kind: str
    I: int
    seed: int = 0
    graph: Optional[GraphStep] = None
    steps: Optional[List[GraphStep]] = None
    B: int = 1
    symmetric: bool = False
    verify_window: int = 50

    def __post_init__(self):
        if self.kind not in ("static", "permuted_ring_plus_random", "custom"):
            raise ConfigurationError(f"unknown graph sequence {self.kind!r}")
        if self.B < 1:
            raise ConfigurationError("B must be at least 1")
        if self.kind == "static":
            if self.graph is None:
                raise ConfigurationError("static sequence needs a graph")
            self.I = self.graph.I
            if not self.graph.strongly_connected():
                raise ConfigurationError("static graph is not strongly connected")
        if self.kind == "custom":
            if not self.steps:
                raise ConfigurationError("custom sequence needs steps")
            self.I = self.steps[0].I
            n = len(self.steps)
            for k in range(min(self.verify_window, n)):
                win = [self.steps[(k + t) % n] for t in range(self.B)]
                if not union(win).strongly_connected():
                    raise ConfigurationError(
                        f"union of steps {k}..{k + self.B - 1} is not strongly connected")

    def step(self, k: int) -> GraphStep:
        if self.kind == "static":
            g = self.graph
        elif self.kind == "custom":
            g = self.steps[k % len(self.steps)]
        else:
            g = _ring_plus_random(self.I, np.random.default_rng([self.seed, k]))
        return g.symmetrized() if self.symmetric else g


def _ring_plus_random(I, rng):
    if I == 1:
        return GraphStep(1)
    perm = rng.permutation(I)
    edges = [(int(perm[t]), int(perm[(t + 1) % I])) for t in range(I)]
    for j in range(I):
        i = int(rng.integers(I - 1))
        edges.append((j, i if i < j else i + 1))
    return GraphStep(I, tuple(edges))


#%% WEIGHTS

@dataclass
class WeightMatrix:
    """Nonnegative ``I x I`` matrix tagged ``row``, ``column`` or ``doubly`` stochastic."""

    W: np.ndarray
    tag: str

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        if self.tag not in ("row", "column", "doubly"):
            raise ConfigurationError(f"unknown stochasticity tag {self.tag!r}")
        if np.any(self.W < 0):
            raise ContractViolation("negative weight", invariant="weights-nonnegative")
        if self.tag in ("row", "doubly") and np.max(np.abs(self.W.sum(axis=1) - 1)) > STOCHASTIC_TOL:
            raise ContractViolation("rows do not sum to one", invariant="row-stochastic")
        if self.tag in ("column", "doubly") and np.max(np.abs(self.W.sum(axis=0) - 1)) > STOCHASTIC_TOL:
            raise ContractViolation("columns do not sum to one", invariant="column-stochastic")

    @property
    def kappa(self) -> float:
        """Smallest positive entry."""
        return float(self.W[self.W > 0].min())

    def compliant(self, step: GraphStep) -> bool:
        M = step.in_adjacency()
        return bool(np.all(self.W[~M] == 0) and np.all(np.diag(self.W) > 0)
                    and np.all(self.W[M] > 0))


WEIGHT_RULES = ("metropolis", "laplacian", "max_degree", "push_sum")


def build_weights(step: GraphStep, rule: str, lam: Optional[float] = None) -> WeightMatrix:
    """
    Weights compliant with ``step``.

    ``metropolis``: ``1 / max(d_i, d_j)`` on edges, the rest on the
    diagonal. ``laplacian``: ``I - lam L`` with ``L_ii = d_i - 1``.
    ``max_degree``: ``1/I`` on edges. These three are doubly stochastic and
    need a symmetric edge set. ``push_sum``: ``a_ij = 1 / d_j`` (column
    stochastic) on any digraph. Degrees count the node itself.
    """
    I = step.I
    M = step.in_adjacency()
    off = M & ~np.eye(I, dtype=bool)
    if rule == "push_sum":
        A = M / step.out_degrees[None, :].astype(float)
        return WeightMatrix(A, "column")
    if rule not in WEIGHT_RULES:
        raise ConfigurationError(f"unknown weight rule {rule!r}")
    if not step.is_symmetric():
        raise ConfigurationError(f"{rule} weights need an undirected graph")
    d = step.degrees.astype(float)
    W = np.zeros((I, I))
    if rule == "metropolis":
        W[off] = (1.0 / np.maximum.outer(d, d))[off]
    elif rule == "max_degree":
        W[off] = 1.0 / I
    else:
        if lam is None or lam <= 0:
            raise ConfigurationError("laplacian rule needs lam > 0")
        if lam * (d.max() - 1.0) >= 1.0:
            raise ConfigurationError("laplacian rule needs lam < 1 / max degree")
        W[off] = lam
    np.fill_diagonal(W, 0.0)
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return WeightMatrix(W, "doubly")


#%% PROTOCOLS

@dataclass
class PushSumState:
    """Local vectors ``x[i]`` and positive weights ``phi[i]`` summing to ``I``."""

    x: np.ndarray
    phi: np.ndarray

    @classmethod
    def start(cls, x0) -> "PushSumState":
        x0 = np.array(x0, dtype=float)
        if x0.ndim == 1:
            x0 = x0[:, None]
        return cls(x0, np.ones(x0.shape[0]))

    def weighted_sum(self) -> np.ndarray:
        """``sum_i phi_i x_i`` with compensated summation."""
        terms = self.phi[:, None] * self.x
        return np.array([math.fsum(terms[:, c]) for c in range(terms.shape[1])])

    def weighted_mean(self) -> np.ndarray:
        return self.weighted_sum() / self.x.shape[0]


def _require(W: WeightMatrix, tags, what):
    if W.tag not in tags:
        raise ContractViolation(f"{what} needs a {' or '.join(tags)} stochastic matrix, "
                                f"got {W.tag}", invariant="stochasticity-tag")


def consensus_step(x: np.ndarray, W: WeightMatrix) -> np.ndarray:
    """``x_i <- sum_j w_ij x_j``."""
    _require(W, ("row", "doubly"), "consensus")
    return W.W @ np.asarray(x, dtype=float)


def implied_weights(A: WeightMatrix, phi: np.ndarray) -> np.ndarray:
    """Row-stochastic combination ``w_ij = a_ij phi_j / sum_l a_il phi_l``."""
    P = A.W * phi[None, :]
    return P / P.sum(axis=1, keepdims=True)


def _mix(A, state):
    phi_new = A.W @ state.phi
    if np.any(phi_new <= 0) or not np.all(np.isfinite(phi_new)):
        raise ContractViolation("push-sum weight left the positive orthant",
                                invariant="phi-positive")
    return phi_new, A.W @ (state.phi[:, None] * state.x)


def push_sum_step(state: PushSumState, A: WeightMatrix) -> PushSumState:
    """``phi <- A phi``; ``x_i <- sum_j a_ij phi_j x_j / phi_i``."""
    _require(A, ("column", "doubly"), "push-sum")
    phi_new, mixed = _mix(A, state)
    return PushSumState(mixed / phi_new[:, None], phi_new)


def tracking_step(state: PushSumState, A: WeightMatrix, u_new: np.ndarray,
                  u_old: np.ndarray) -> PushSumState:
    """Push-sum step plus the signal increment ``u_new - u_old`` scaled by ``1/phi``."""
    _require(A, ("column", "doubly"), "tracking")
    phi_new, mixed = _mix(A, state)
    du = np.asarray(u_new, dtype=float) - np.asarray(u_old, dtype=float)
    return PushSumState((mixed + du.reshape(mixed.shape)) / phi_new[:, None], phi_new)


def consensus_error(state: PushSumState) -> float:
    """``max_i ||x_i - (1/I) sum_j phi_j x_j||``."""
    return float(np.max(np.linalg.norm(state.x - state.weighted_mean()[None, :], axis=1)))


def phi_bounds(kappa: float, I: int, B: int):
    """Lower and upper bounds ``kappa^{2(I-1)B}`` and ``I - kappa^{2(I-1)B}`` on push-sum weights."""
    lb = kappa ** (2 * (I - 1) * B)
    return lb, I - lb


def rate_constants(kappa: float, phi_lb: float, phi_ub: float, I: int, B: int):
    """
    Constants ``(c, rho)`` of the geometric consensus bound, using
    ``kappa_tilde = kappa phi_lb / phi_ub``. They are loose upper bounds.
    """
    if I == 1:
        return 0.0, 0.0
    kt = kappa * phi_lb / phi_ub
    n = (I - 1) * B
    base = kt ** n
    rho = (1.0 - base) ** (1.0 / n)
    if rho <= 0.0 or base == 0.0:
        return math.inf, rho
    c = (2.0 * I / rho) * 2.0 * (1.0 + kt ** (-n)) / (1.0 - base)
    return c, rho


@dataclass
class PushSumRun:
    """Trajectory of :func:`perturbed_push_sum_run`."""

    states: List[PushSumState] = field(default_factory=list)
    errors: List[float] = field(default_factory=list)
    invariant_drift: List[float] = field(default_factory=list)
    kappa: float = 1.0
    phi_min: float = math.inf
    phi_max: float = -math.inf

    def phi_bounds(self, I, B):
        return phi_bounds(self.kappa, I, B)


def perturbed_push_sum_run(sequence: GraphSequence, rule: str, x0,
                           steps: int,
                           perturbation: Optional[Callable] = None,
                           record_states: bool = False) -> PushSumRun:
    """
    Perturbed condensed push-sum over ``sequence``.

    ``perturbation(k, phi_next)`` returns the ``I x m`` array ``eps^k``
    added after the mixing, or ``None`` for no perturbation. The error
    series is ``max_i ||x_i^k - (1/I) sum_j phi_j^k x_j^k||`` for ``k =
    0..steps``. ``invariant_drift`` tracks ``|sum_i phi_i x_i - s^k|``
    where ``s^k`` accumulates the injected ``phi^{k+1} eps^k``.
    """
    state = PushSumState.start(x0)
    target = state.weighted_sum()
    run = PushSumRun(kappa=math.inf)
    run.errors.append(consensus_error(state))
    run.invariant_drift.append(0.0)
    run.phi_min, run.phi_max = float(state.phi.min()), float(state.phi.max())
    if record_states:
        run.states.append(state)
    for k in range(steps):
        A = build_weights(sequence.step(k), rule)
        run.kappa = min(run.kappa, A.kappa)
        nxt = push_sum_step(state, A)
        if perturbation is not None:
            eps = perturbation(k, nxt.phi)
            if eps is not None:
                eps = np.asarray(eps, dtype=float).reshape(nxt.x.shape)
                nxt = PushSumState(nxt.x + eps, nxt.phi)
                target = target + np.array([math.fsum(c) for c in (nxt.phi[:, None] * eps).T])
        state = nxt
        run.phi_min = min(run.phi_min, float(state.phi.min()))
        run.phi_max = max(run.phi_max, float(state.phi.max()))
        run.errors.append(consensus_error(state))
        run.invariant_drift.append(float(np.max(np.abs(state.weighted_sum() - target))))
        if record_states:
            run.states.append(state)
    if run.kappa == math.inf:
        run.kappa = 1.0
    return run


def fit_log_decay(errors, floor: float = 1e-13):
    """
    Least-squares line through ``log(errors)`` up to the first value below
    ``floor`` (round-off plateau). Returns ``(slope, r2, n_points)``.
    """
    e = np.asarray(errors, dtype=float)
    stop = np.flatnonzero(e <= floor)
    n = int(stop[0]) if stop.size else e.size
    if n < 3:
        raise ConfigurationError("too few points above the floor to fit a rate")
    k = np.arange(n, dtype=float)
    y = np.log(e[:n])
    slope, icpt = np.polyfit(k, y, 1)
    resid = y - (slope * k + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss if ss > 0 else 1.0
    return float(slope), r2, n


#%% EDGE-LIST IO

def write_edge_list(path, steps: Sequence[GraphStep]):
    """One stanza per step: ``step k`` then one ``j i`` line per edge."""
    with open(path, "w") as fh:
        fh.write(f"nodes {steps[0].I}\n")
        for k, s in enumerate(steps):
            fh.write(f"step {k}\n")
            for j, i in s.edges:
                fh.write(f"{j} {i}\n")


def read_edge_list(path) -> List[GraphStep]:
    I = None
    stanzas: List[list] = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            if tok[0] == "nodes":
                I = int(tok[1])
            elif tok[0] == "step":
                if int(tok[1]) != len(stanzas):
                    raise ConfigurationError(f"{path}:{ln}: steps out of order")
                stanzas.append([])
            elif len(tok) == 2 and stanzas:
                stanzas[-1].append((int(tok[0]), int(tok[1])))
            else:
                raise ConfigurationError(f"{path}:{ln}: cannot parse {line.strip()!r}")
    if I is None:
        I = 1 + max((max(e) for s in stanzas for e in s), default=0)
    return [GraphStep(I, tuple(s)) for s in stanzas]
