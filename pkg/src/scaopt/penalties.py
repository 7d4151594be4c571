"""
Nonconvex sparsity penalties written as differences of convex functions.

Every penalty ``g`` is even, vanishes at zero and splits as
``g(x) = eta * |x| - g_minus(x)`` with ``g_minus`` convex and smooth.
Linearizing ``g_minus`` gives a weighted-l1 majorizer that touches ``g``
at the base point, which is what the MM and SCA solvers consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


KINDS = ("exp", "lp_plus", "lp_minus", "scad", "log")
SCAD_DEFAULT_A = 3.7


@dataclass(frozen=True)
class DCPenalty:
    """
    Penalty of the form ``eta |x| - g_minus(x)``.

    Parameters
    ----------
    kind : str
        One of ``exp``, ``lp_plus``, ``lp_minus``, ``scad``, ``log``.
    theta : float
        Tightness parameter; larger values approach the l0 indicator.
    eps : float
        Offset for ``lp_plus`` (must be positive).
    p : float
        Negative exponent for ``lp_minus``.
    a : float
        SCAD shape parameter, ``a > 1``.
    """

    kind: str
    theta: float
    eps: float = 1.0
    p: float = -1.0
    a: float = SCAD_DEFAULT_A

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown penalty kind {self.kind!r}")
        if not self.theta > 0:
            raise ConfigurationError("theta must be positive")
        if self.kind == "lp_plus" and not (self.theta > 1 and self.eps > 0):
            raise ConfigurationError("lp_plus needs theta > 1 and eps > 0")
        if self.kind == "lp_minus" and not self.p < 0:
            raise ConfigurationError("lp_minus needs p < 0")
        if self.kind == "scad" and not self.a > 1:
            raise ConfigurationError("SCAD needs a > 1")

    # -- table values ---------------------------------------------------

    @property
    def eta(self) -> float:
        t = self.theta
        if self.kind == "exp":
            return t
        if self.kind == "lp_plus":
            return (1.0 / t) * self.eps ** (1.0 / t - 1.0)
        if self.kind == "lp_minus":
            return -self.p * t
        if self.kind == "scad":
            return 2.0 * t / (self.a + 1.0)
        return t / math.log1p(t)

    def g(self, x):
        ax = np.abs(np.asarray(x, dtype=float))
        t = self.theta
        if self.kind == "exp":
            out = -np.expm1(-t * ax)
        elif self.kind == "lp_plus":
            out = (ax + self.eps) ** (1.0 / t) - self.eps ** (1.0 / t)
        elif self.kind == "lp_minus":
            out = 1.0 - (t * ax + 1.0) ** self.p
        elif self.kind == "scad":
            a = self.a
            mid = (-t * t * ax * ax + 2 * a * t * ax - 1.0) / (a * a - 1.0)
            out = np.where(ax <= 1.0 / t, 2 * t / (a + 1.0) * ax,
                           np.where(ax <= a / t, mid, 1.0))
        else:
            out = np.log1p(t * ax) / math.log1p(t)
        return _as_output(out)

    def g_minus(self, x):
        """Convex complement ``eta |x| - g(x)``."""
        return _as_output(self.eta * np.abs(np.asarray(x, dtype=float))
                          - np.asarray(self.g(x)))

    def dg_minus(self, x):
        """Derivative of ``g_minus`` in closed form (zero at the origin)."""
        xv = np.asarray(x, dtype=float)
        ax = np.abs(xv)
        s = np.sign(xv)
        t = self.theta
        if self.kind == "exp":
            out = s * t * (-np.expm1(-t * ax))
        elif self.kind == "lp_plus":
            out = s * (1.0 / t) * (self.eps ** (1.0 / t - 1.0)
                                   - (ax + self.eps) ** (1.0 / t - 1.0))
        elif self.kind == "lp_minus":
            out = -s * self.p * t * (1.0 - (1.0 + t * ax) ** (self.p - 1.0))
        elif self.kind == "scad":
            a = self.a
            out = np.where(ax <= 1.0 / t, 0.0,
                           np.where(ax <= a / t,
                                    s * 2 * t * (t * ax - 1.0) / (a * a - 1.0),
                                    s * 2 * t / (a + 1.0)))
        else:
            out = s * t * t * ax / (math.log1p(t) * (1.0 + t * ax))
        return _as_output(out)

    def dg(self, x):
        """Derivative of ``g`` away from the origin."""
        xv = np.asarray(x, dtype=float)
        return _as_output(self.eta * np.sign(xv) - np.asarray(self.dg_minus(xv)))

    # -- majorizers -----------------------------------------------------

    def majorize(self, x, y):
        """DC majorizer ``eta |x| - g_minus(y) - dg_minus(y) (x - y)``."""
        xv = np.asarray(x, dtype=float)
        yv = np.asarray(y, dtype=float)
        out = (self.eta * np.abs(xv) - np.asarray(self.g_minus(yv))
               - np.asarray(self.dg_minus(yv)) * (xv - yv))
        return _as_output(out)

    def adhoc_weight(self, y):
        """Weight of the tailored weighted-l1 majorizer (log and lp_plus only)."""
        ay = np.abs(np.asarray(y, dtype=float))
        t = self.theta
        if self.kind == "log":
            return _as_output(t / (math.log1p(t) * (1.0 + t * ay)))
        if self.kind == "lp_plus":
            return _as_output((1.0 / t) * (ay + self.eps) ** (1.0 / t - 1.0))
        raise ConfigurationError("tailored majorizer exists for log and lp_plus only")

    def majorize_adhoc(self, x, y):
        """``g(y) + w(y) (|x| - |y|)``: tangent of the concave profile in ``|x|``."""
        ax = np.abs(np.asarray(x, dtype=float))
        ay = np.abs(np.asarray(y, dtype=float))
        out = np.asarray(self.g(ay)) + np.asarray(self.adhoc_weight(ay)) * (ax - ay)
        return _as_output(out)


def _as_output(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v


#%% FUNCTIONAL INTERFACE

def penalty_value(p: DCPenalty, x):
    return p.g(x)


def penalty_eta(p: DCPenalty) -> float:
    return p.eta


def majorize_dc(p: DCPenalty, x, y):
    return p.majorize(x, y)


def majorize_concave_adhoc(kind: str, x, y, theta: float, eps: float = 1.0):
    """Tailored majorizer for ``kind`` in ``{"log", "lp_plus"}``."""
    if kind not in ("log", "lp_plus"):
        raise ConfigurationError("tailored majorizer exists for log and lp_plus only")
    return DCPenalty(kind, theta, eps=eps).majorize_adhoc(x, y)


def from_params(kind: str, **params) -> DCPenalty:
    """Build a penalty from loosely typed keyword parameters (config files)."""
    allowed = {"theta", "eps", "p", "a"}
    extra = set(params) - allowed
    if extra:
        raise ConfigurationError(f"unknown penalty parameters: {sorted(extra)}")
    if "theta" not in params:
        raise ConfigurationError("penalty needs theta")
    return DCPenalty(kind, **{k: float(v) for k, v in params.items()})
