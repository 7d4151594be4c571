import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scaopt.errors import ConfigurationError
from scaopt.penalties import (KINDS, DCPenalty, from_params, majorize_concave_adhoc,
                              majorize_dc, penalty_eta, penalty_value)

PENALTIES = [DCPenalty("exp", 2.0), DCPenalty("lp_plus", 2.0, eps=1.0),
             DCPenalty("lp_plus", 3.0, eps=0.5), DCPenalty("lp_minus", 1.5, p=-1.0),
             DCPenalty("lp_minus", 2.0, p=-0.5), DCPenalty("scad", 3.0, a=4.0),
             DCPenalty("scad", 1.0), DCPenalty("log", 9.0), DCPenalty("log", 0.5)]
ids = [f"{p.kind}-{p.theta}" for p in PENALTIES]
reals = st.floats(-20, 20, allow_nan=False)


def test_value_examples():
    log9 = DCPenalty("log", 9.0)
    assert penalty_value(log9, 0.0) == 0.0
    assert penalty_value(log9, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert penalty_value(DCPenalty("exp", 2.0), 0.0) == 0.0


def test_eta_examples():
    assert penalty_eta(DCPenalty("exp", 2.0)) == 2.0
    assert penalty_eta(DCPenalty("log", 9.0)) == pytest.approx(9 / math.log(10), rel=1e-15)
    assert penalty_eta(DCPenalty("log", 9.0)) == pytest.approx(3.90865, abs=1e-5)
    assert penalty_eta(DCPenalty("scad", 3.0, a=4.0)) == pytest.approx(1.2, rel=1e-15)


def test_majorize_examples():
    log9 = DCPenalty("log", 9.0)
    # dg_minus(0) = 0, so the majorizer at y = 0 is eta |x|
    assert majorize_dc(log9, 0.5, 0.0) == pytest.approx(1.95433, abs=1e-5)
    assert majorize_dc(log9, 2.0, 1.0) >= penalty_value(log9, 2.0)


def test_adhoc_examples():
    assert majorize_concave_adhoc("log", 1.0, 0.0, theta=9.0) == pytest.approx(9 / math.log(10))
    assert majorize_concave_adhoc("log", 0.0, 0.7, theta=3.0) == pytest.approx(
        penalty_value(DCPenalty("log", 3.0), 0.7) - DCPenalty("log", 3.0).adhoc_weight(0.7) * 0.7)
    assert majorize_concave_adhoc("log", 0.0, 0.0, theta=3.0) == 0.0
    assert majorize_concave_adhoc("lp_plus", 4.0, 0.0, theta=2.0, eps=1.0) == pytest.approx(2.0)
    with pytest.raises(ConfigurationError):
        majorize_concave_adhoc("exp", 1.0, 0.0, theta=2.0)


@pytest.mark.parametrize("kw", [dict(kind="nope", theta=1.0), dict(kind="log", theta=0.0),
                                dict(kind="lp_plus", theta=0.5), dict(kind="lp_minus", theta=1.0, p=1.0),
                                dict(kind="scad", theta=1.0, a=1.0)])
def test_validation(kw):
    with pytest.raises(ConfigurationError):
        DCPenalty(**kw)


def test_from_params():
    p = from_params("scad", theta="2", a=3)
    assert p == DCPenalty("scad", 2.0, a=3.0)
    with pytest.raises(ConfigurationError):
        from_params("log")
    with pytest.raises(ConfigurationError):
        from_params("log", theta=1.0, q=2)


@pytest.mark.parametrize("p", PENALTIES, ids=ids)
def test_profile_shape(p):
    # even, zero at the origin, nondecreasing in |x|, bounded by eta |x|
    x = np.linspace(0, 10, 2001)
    g = p.g(x)
    assert g[0] == 0.0
    assert np.all(np.diff(g) >= -1e-15)
    assert np.allclose(p.g(-x), g)
    assert np.all(g <= p.eta * x + 1e-12)


@pytest.mark.parametrize("p", PENALTIES, ids=ids)
def test_derivatives_match_finite_differences(p):
    x = np.array([-3.1, -0.7, -0.05, 0.05, 0.4, 0.9, 2.5])
    h = 1e-6
    fd = (np.asarray(p.g_minus(x + h)) - np.asarray(p.g_minus(x - h))) / (2 * h)
    assert np.allclose(p.dg_minus(x), fd, atol=1e-6)
    fd = (np.asarray(p.g(x + h)) - np.asarray(p.g(x - h))) / (2 * h)
    assert np.allclose(p.dg(x), fd, atol=1e-6)
    assert p.dg_minus(0.0) == 0.0


@pytest.mark.parametrize("p", PENALTIES, ids=ids)
def test_complement_is_convex(p):
    x = np.linspace(-5, 5, 4001)
    d = np.asarray(p.dg_minus(x))
    assert np.all(np.diff(d) >= -1e-12)


@pytest.mark.parametrize("p", PENALTIES, ids=ids)
@given(x=reals, y=reals)
@settings(max_examples=60, deadline=None)
def test_dc_majorizer_bounds_and_touches(p, x, y):
    assert p.majorize(x, y) >= p.g(x) - 1e-10 * max(1.0, abs(x))
    assert p.majorize(y, y) == pytest.approx(p.g(y), abs=1e-12)


@pytest.mark.parametrize("p", [DCPenalty("log", 9.0), DCPenalty("log", 0.3),
                               DCPenalty("lp_plus", 2.0), DCPenalty("lp_plus", 4.0, eps=0.1)])
@given(x=reals, y=reals)
@settings(max_examples=60, deadline=None)
def test_adhoc_majorizer_bounds_and_touches(p, x, y):
    assert p.majorize_adhoc(x, y) >= p.g(x) - 1e-10 * max(1.0, abs(x))
    assert p.majorize_adhoc(y, y) == pytest.approx(p.g(y), abs=1e-12)


def test_vectorized_matches_scalar():
    x = np.array([-1.0, 0.0, 0.3, 4.0])
    for kind in KINDS:
        p = DCPenalty(kind, 2.0)
        assert np.array_equal(p.g(x), [p.g(v) for v in x])
        assert isinstance(p.g(0.3), float)
