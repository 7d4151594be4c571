"""
Reference solvers used to certify the iterative methods.

``oracle_proxgrad`` is the plain proximal gradient method with step
``1/L``; ``oracle_gridmin`` is a brute-force grid search in one or two
dimensions followed by a local refinement pass.
"""

from __future__ import annotations

import math
from typing import Callable, List, Optional, Tuple

import numpy as np

from ..core import CompositeProblem
from ..errors import ConfigurationError, NumericalError, OracleError

__all__ = ["oracle_proxgrad", "oracle_gridmin", "oracle_grid_local_minima"]


def oracle_proxgrad(problem: CompositeProblem, tol: float = 1e-12,
                    L: Optional[float] = None, x0: Optional[np.ndarray] = None,
                    max_iters: int = 10 ** 6) -> Tuple[np.ndarray, float]:
    """
    Proximal gradient iterations ``x <- prox_{G/L}(x - grad F(x) / L)``.

    Parameters
    ----------
    problem : CompositeProblem
        Convex instance; ``L`` defaults to ``problem.lipschitz_hint``.
    tol : float
        Stop once ``||x_new - x|| <= tol``.
    L : float, optional
    x0 : ndarray, optional
        Zero by default (projected onto the feasible set).
    max_iters : int
        Hard cap; exceeding it raises :class:`OracleError`.

    Returns
    -------
    x : ndarray
        Reference minimizer.
    v : float
        ``F(x) + G(x)``.
    """
    L = problem.lipschitz_hint if L is None else L
    if L is None or not L > 0:
        raise ConfigurationError("oracle_proxgrad needs a positive Lipschitz constant")
    if not tol > 0:
        raise ConfigurationError("tol must be positive")
    step = 1.0 / L
    x = np.zeros(problem.dim) if x0 is None else np.array(x0, dtype=float)
    x = problem.prox_G(x, step, None)
    for _ in range(max_iters):
        x_new = problem.prox_G(x - step * problem.grad_F(x), step, None)
        if not np.all(np.isfinite(x_new)):
            raise NumericalError("proximal gradient oracle diverged")
        done = np.linalg.norm(x_new - x) <= tol
        x = x_new
        if done:
            return x, problem.value(x)
    raise OracleError(f"proximal gradient oracle did not reach tol={tol:g} "
                      f"within {max_iters} iterations")


#%% GRID SEARCH

def _boxes(box) -> np.ndarray:
    b = np.asarray(box, dtype=float)
    if b.ndim == 1:
        b = b[None, :]
    if b.ndim != 2 or b.shape[1] != 2 or b.shape[0] not in (1, 2):
        raise ConfigurationError("box must be (lo, hi) or ((lo1, hi1), (lo2, hi2))")
    if not np.all(np.isfinite(b)) or np.any(b[:, 1] < b[:, 0]):
        raise ConfigurationError("box must be finite with lo <= hi")
    return b


def _evaluate(f, pts, vectorized):
    """Values of ``f`` at ``pts`` of shape ``(N, d)``."""
    d = pts.shape[1]
    arg = pts[:, 0] if d == 1 else pts
    if vectorized:
        vals = np.asarray(f(arg), dtype=float).reshape(-1)
    elif d == 1:
        vals = np.array([float(f(float(v))) for v in arg])
    else:
        vals = np.array([float(f(p)) for p in arg])
    if vals.shape[0] != pts.shape[0]:
        raise ConfigurationError("vectorized f must return one value per point")
    return np.where(np.isnan(vals), np.inf, vals)


def _grid(b, counts):
    axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(b, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return axes, np.stack([m.ravel() for m in mesh], axis=1)


def _counts(b, target_points):
    d = b.shape[0]
    per = max(3, int(round(target_points ** (1.0 / d))))
    return [per if hi > lo else 1 for lo, hi in b]


def _refine(f, b, center, h, resolution, vectorized, max_fine):
    """Fine grids of spacing ``<= resolution`` around ``center``, zooming as needed."""
    x = np.array(center, dtype=float)
    while True:
        lo = np.maximum(b[:, 0], x - h)
        hi = np.minimum(b[:, 1], x + h)
        fb = np.stack([lo, hi], axis=1)
        n_needed = [int(math.ceil((u - l) / resolution)) + 1 for l, u in fb]
        per = max(3, int(max_fine ** (1.0 / len(x))))
        counts = [min(n, per) if u > l else 1 for n, (l, u) in zip(n_needed, fb)]
        _, pts = _grid(fb, counts)
        vals = _evaluate(f, pts, vectorized)
        x = pts[int(np.argmin(vals))]
        spacing = max(((u - l) / (n - 1) if n > 1 else 0.0)
                      for n, (l, u) in zip(counts, fb))
        if spacing <= resolution:
            return x
        h = 2.0 * spacing


def oracle_gridmin(f: Callable, box, resolution: float, vectorized: bool = False,
                   coarse_points: int = 250_000, max_fine: int = 40_000):
    """
    Approximate global minimizer of a 1-D or 2-D function on a box.

    An exhaustive coarse grid picks the best cell, then a refinement pass
    on a grid of spacing at most ``resolution`` around it pins the
    minimizer down to that accuracy (provided the minimizer sits in the
    basin the coarse grid identified).

    Parameters
    ----------
    f : callable
        ``f(x)`` for a float ``x`` in 1-D, ``f(p)`` for a length-2 array in
        2-D. With ``vectorized=True`` it receives an ``(N,)`` array (1-D) or
        ``(N, 2)`` array (2-D) and returns ``N`` values.
    box : (lo, hi) or ((lo1, hi1), (lo2, hi2))
    resolution : float
        Target accuracy in the argument.

    Returns
    -------
    float or ndarray
    """
    if not resolution > 0:
        raise ConfigurationError("resolution must be positive")
    b = _boxes(box)
    counts = _counts(b, coarse_points)
    _, pts = _grid(b, counts)
    vals = _evaluate(f, pts, vectorized)
    best = pts[int(np.argmin(vals))]
    h = max(((hi - lo) / (n - 1) if n > 1 else 0.0) for (lo, hi), n in zip(b, counts))
    x = best if h <= resolution else _refine(f, b, best, h, resolution, vectorized, max_fine)
    return float(x[0]) if b.shape[0] == 1 else x


def oracle_grid_local_minima(f: Callable, box, resolution: float,
                             vectorized: bool = False,
                             coarse_points: int = 20_001) -> List[float]:
    """
    All local minima of a 1-D function on an interval, each refined to
    ``resolution``. Plateaus of equal values count once.
    """
    b = _boxes(box)
    if b.shape[0] != 1:
        raise ConfigurationError("local-minima search is one-dimensional")
    lo, hi = b[0]
    n = max(3, int(coarse_points))
    xs = np.linspace(lo, hi, n)
    vals = _evaluate(f, xs[:, None], vectorized)
    h = (hi - lo) / (n - 1)
    left = np.concatenate(([np.inf], vals[:-1]))
    right = np.concatenate((vals[1:], [np.inf]))
    idx = np.flatnonzero((vals <= left) & (vals < right))
    out = []
    for i in idx:
        sub = np.array([[max(lo, xs[i] - h), min(hi, xs[i] + h)]])
        if h <= resolution:
            out.append(float(xs[i]))
        else:
            out.append(float(_refine(f, sub, xs[i:i + 1], h, resolution, vectorized, 4001)[0]))
    return out
