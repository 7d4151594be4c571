"""Generic MM and Block-MM drivers with descent-chain bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..core import (BlockPartition, MeritReport, TOL_CONVERGENCE,
                    iterate_delta, relative_descent)
from ..errors import ConfigurationError, ContractViolation


CHAIN_TOL = 1e-10


@dataclass
class MMConfig:
    """
    Stopping rules and inner-loop settings for MM solvers.

    The outer loop stops as soon as either the relative descent or the
    iterate change falls below its threshold, or after ``max_iters``.
    """

    max_iters: int = 500
    tol_relative_descent: float = TOL_CONVERGENCE
    tol_iterate_delta: float = TOL_CONVERGENCE
    inner_max_iters: int = 200
    inner_tol: float = 1e-8
    check_chain: bool = True
    chain_tol: float = CHAIN_TOL

    def __post_init__(self):
        if self.max_iters < 1 or self.inner_max_iters < 1:
            raise ConfigurationError("iteration caps must be at least 1")
        if min(self.tol_relative_descent, self.tol_iterate_delta,
               self.inner_tol, self.chain_tol) <= 0:
            raise ConfigurationError("tolerances must be positive")


@dataclass
class ChainRecord:
    """One link ``V(x+) <= S(x+|x) <= S(x|x) = V(x)`` of the descent chain."""

    v_new: float
    s_new: float
    s_old: float
    v_old: float

    def gaps(self):
        return (self.v_new - self.s_new, self.s_new - self.s_old,
                abs(self.s_old - self.v_old))


@dataclass
class MMResult:
    x: object
    objective: List[float] = field(default_factory=list)
    reports: List[MeritReport] = field(default_factory=list)
    chain: List[ChainRecord] = field(default_factory=list)
    blocks: List[int] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def check_chain(rec: ChainRecord, tol: float, where: str = "MM step"):
    """Raise if any link of the descent chain fails by more than ``tol`` (scaled)."""
    scale = max(1.0, abs(rec.v_old))
    a, b, c = rec.gaps()
    if a > tol * scale or b > tol * scale or c > tol * scale:
        raise ContractViolation(
            f"{where}: descent chain broken (V+ - S+ = {a:.3e}, "
            f"S+ - S = {b:.3e}, |S - V| = {c:.3e})",
            invariant="mm-descent-chain")


def _stop(v_old, v_new, x_old, x_new, cfg):
    rd = relative_descent(v_old, v_new)
    dx = iterate_delta(x_old, x_new)
    return rd, dx, (rd < cfg.tol_relative_descent or dx < cfg.tol_iterate_delta)


def mm_minimize(surrogate_solver: Callable, V: Callable, x0,
                config: Optional[MMConfig] = None,
                surrogate_value: Optional[Callable] = None,
                callback: Optional[Callable] = None) -> MMResult:
    """
    Majorization-minimization loop.

    Parameters
    ----------
    surrogate_solver : callable
        ``x -> argmin_u S(u | x)`` for a surrogate that upper-bounds ``V`` and
        touches it at ``x``.
    V : callable
        Objective.
    x0 : array_like
        Feasible starting point.
    config : MMConfig, optional
    surrogate_value : callable, optional
        ``(u, x) -> S(u | x)``. When given, the full chain is checked at
        every iteration; otherwise only monotonicity of ``V`` is checked.
    callback : callable, optional
        Called as ``callback(k, x)`` after every iteration.

    Returns
    -------
    MMResult
    """
    cfg = config or MMConfig()
    x = np.array(x0, dtype=float, copy=True)
    v = float(V(x))
    res = MMResult(x=x, objective=[v])
    for k in range(cfg.max_iters):
        x_new = np.asarray(surrogate_solver(x), dtype=float)
        v_new = float(V(x_new))
        if surrogate_value is not None:
            rec = ChainRecord(v_new, float(surrogate_value(x_new, x)),
                              float(surrogate_value(x, x)), v)
        else:
            rec = ChainRecord(v_new, v_new, v, v)
        res.chain.append(rec)
        if cfg.check_chain:
            check_chain(rec, cfg.chain_tol)
        rd, dx, stop = _stop(v, v_new, x, x_new, cfg)
        res.reports.append(MeritReport(v_new, dx, rd, dx))
        x, v = x_new, v_new
        res.objective.append(v)
        res.iterations = k + 1
        if callback is not None:
            callback(k, x)
        if stop:
            res.converged = True
            break
    res.x = x
    return res


#%% BLOCK-MM

@dataclass
class BlockRule:
    """
    Block selection for Block-MM.

    Parameters
    ----------
    kind : str
        ``cyclic``, ``max_improvement`` or ``random``.
    T : int, optional
        Window of the essentially cyclic rule (must be at least ``n``).
    p_min : float
        Lower bound on selection probabilities for the random rule.
    probs : sequence of float, optional
        Selection probabilities for the random rule (uniform if omitted).
    seed : int
    """

    kind: str = "cyclic"
    T: Optional[int] = None
    p_min: float = 0.0
    probs: Optional[Sequence[float]] = None
    seed: int = 0

    def validate(self, n: int):
        if self.kind not in ("cyclic", "max_improvement", "random"):
            raise ConfigurationError(f"unknown block rule {self.kind!r}")
        if self.kind == "cyclic" and self.T is not None and self.T < n:
            raise ConfigurationError("cyclic window T must be at least n")
        if self.kind == "random":
            p = self._probs(n)
            if self.p_min <= 0 or np.any(p < self.p_min):
                raise ConfigurationError("random rule needs probabilities >= p_min > 0")

    def _probs(self, n):
        if self.probs is None:
            return np.full(n, 1.0 / n)
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (n,) or abs(p.sum() - 1) > 1e-12:
            raise ConfigurationError("probabilities must be a distribution over blocks")
        return p


def block_mm_minimize(block_solver: Callable, V: Callable, x0,
                      partition: BlockPartition, rule: BlockRule,
                      config: Optional[MMConfig] = None,
                      block_surrogate_value: Optional[Callable] = None) -> MMResult:
    """
    Block-MM: at each iteration one block is replaced by the minimizer of
    its surrogate while the others stay fixed.

    Parameters
    ----------
    block_solver : callable
        ``(i, x) -> argmin_{u} S_i(u | x)`` returning block ``i``.
    V : callable
    x0 : array_like
    partition : BlockPartition
    rule : BlockRule
    config : MMConfig, optional
    block_surrogate_value : callable, optional
        ``(i, u, x) -> S_i(u | x)``; used for the chain check and by the
        max-improvement rule. Without it ``V`` at the candidate is used,
        which is exact for surrogates equal to ``V`` along the block.

    Notes
    -----
    The stopping test looks at one full sweep (``n`` consecutive
    iterations) so that a block that happens not to move does not stop
    the run early.
    """
    cfg = config or MMConfig()
    n = partition.n
    rule.validate(n)
    rng = np.random.default_rng(rule.seed)
    probs = rule._probs(n) if rule.kind == "random" else None
    x = np.array(x0, dtype=float, copy=True)
    v = float(V(x))
    res = MMResult(x=x, objective=[v])
    sweep_start_x, sweep_start_v = x.copy(), v

    def sval(i, u, xx):
        if block_surrogate_value is not None:
            return float(block_surrogate_value(i, u, xx))
        y = xx.copy()
        y[partition.slice(i)] = u
        return float(V(y))

    for k in range(cfg.max_iters):
        if rule.kind == "cyclic":
            i = k % n
            cand = np.asarray(block_solver(i, x), dtype=float)
        elif rule.kind == "random":
            i = int(rng.choice(n, p=probs))
            cand = np.asarray(block_solver(i, x), dtype=float)
        else:
            cands = [np.asarray(block_solver(j, x), dtype=float) for j in range(n)]
            vals = np.array([sval(j, cands[j], x) for j in range(n)])
            i = int(np.argmin(vals))  # first minimum, i.e. lowest index on ties
            cand = cands[i]
        x_new = x.copy()
        x_new[partition.slice(i)] = cand
        v_new = float(V(x_new))
        rec = ChainRecord(v_new, sval(i, cand, x),
                          sval(i, x[partition.slice(i)].copy(), x), v)
        res.chain.append(rec)
        if cfg.check_chain:
            check_chain(rec, cfg.chain_tol, where=f"block {i}")
        res.blocks.append(i)
        dx = iterate_delta(x, x_new)
        res.reports.append(MeritReport(v_new, dx, relative_descent(v, v_new), dx))
        x, v = x_new, v_new
        res.objective.append(v)
        res.iterations = k + 1
        if (k + 1) % n == 0:
            _, _, stop = _stop(sweep_start_v, v, sweep_start_x, x, cfg)
            if stop:
                res.converged = True
                break
            sweep_start_x, sweep_start_v = x.copy(), v
    res.x = x
    return res
