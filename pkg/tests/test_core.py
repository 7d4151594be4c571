import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scaopt.core import (BlockPartition, CompositeProblem, Schedule, armijo_linesearch,
                         block_soft_threshold, finite_difference_gradient, gram_lambda_max,
                         iterate_delta, next_stepsize, power_iteration, project_ball2,
                         project_box, project_nonneg, relative_descent, relative_error,
                         soft_threshold)
from scaopt.errors import (ConfigurationError, ContractViolation, DomainError,
                           LineSearchError)

finite = st.floats(-1e6, 1e6, allow_nan=False)


# partitions

def test_partition_offsets_and_slices():
    p = BlockPartition((2, 1, 3))
    assert p.n == 3 and p.total == 6
    assert p.offsets == (0, 2, 3)
    x = np.arange(6.0)
    assert np.array_equal(p.extract(x, 2), [3, 4, 5])
    assert np.array_equal(p.assemble([p.extract(x, i) for i in range(3)]), x)
    assert np.allclose(p.block_norms(x), [1.0, 2.0, np.linalg.norm([3, 4, 5])])


def test_partition_constructors():
    assert BlockPartition.scalar(4).sizes == (1, 1, 1, 1)
    assert BlockPartition.uniform(6, 2).sizes == (2, 2, 2)


@pytest.mark.parametrize("sizes", [(), (1, 0), (2, -1)])
def test_partition_rejects_bad_sizes(sizes):
    with pytest.raises(ConfigurationError):
        BlockPartition(sizes)


def test_problem_partition_must_match_dimension():
    with pytest.raises(ConfigurationError):
        CompositeProblem(3, lambda x: 0.0, lambda x: x, partition=BlockPartition((2,)))


# soft thresholding and projections

@pytest.mark.parametrize("x,a,out", [(5.0, 2.0, 3.0), (-1.0, 2.0, 0.0), (-7.5, 0.0, -7.5)])
def test_soft_threshold_examples(x, a, out):
    assert soft_threshold(x, a) == out


def test_soft_threshold_negative_threshold():
    with pytest.raises(DomainError):
        soft_threshold(1.0, -0.1)


@given(finite, st.floats(0, 1e6))
def test_soft_threshold_is_prox_of_abs(x, a):
    # the output minimizes a|u| + (u - x)^2 / 2: compare against neighbours
    u = soft_threshold(x, a)
    f = lambda v: a * abs(v) + 0.5 * (v - x) ** 2
    h = 1e-3 * max(1.0, abs(x))
    assert f(u) <= min(f(u - h), f(u + h)) + 1e-9 * max(1.0, x * x)
    assert abs(u) <= abs(x)
    assert u == 0 or math.copysign(1, u) == math.copysign(1, x)


@given(st.lists(finite, min_size=1, max_size=8), st.floats(0, 1e3))
def test_block_soft_threshold_shrinks_norm(v, a):
    v = np.array(v)
    out = block_soft_threshold(v, a)
    assert np.linalg.norm(out) == pytest.approx(max(np.linalg.norm(v) - a, 0.0),
                                                rel=1e-9, abs=1e-9)


def test_projection_examples():
    assert np.array_equal(project_nonneg(np.array([-1.0, 2.0])), [0.0, 2.0])
    assert np.array_equal(project_ball2(np.array([3.0, 4.0]), 5.0), [3.0, 4.0])
    assert np.allclose(project_ball2(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])
    assert np.array_equal(project_box(np.array([-2.0, 0.5, 9.0]), 0.0, 1.0), [0.0, 0.5, 1.0])


@given(st.lists(finite, min_size=1, max_size=6), st.floats(0.01, 100))
def test_projections_are_idempotent_and_feasible(v, r):
    v = np.array(v)
    for proj in (project_nonneg, lambda u: project_ball2(u, r),
                 lambda u: project_box(u, -r, r)):
        p = proj(v)
        assert np.allclose(proj(p), p)
    assert np.linalg.norm(project_ball2(v, r)) <= r * (1 + 1e-12)


# spectral helpers

def test_power_iteration_matches_eigvalsh():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((30, 12))
    exact = np.linalg.eigvalsh(A.T @ A)[-1]
    assert power_iteration(A.T @ A, iters=500) == pytest.approx(exact, rel=1e-8)
    assert gram_lambda_max(A, method="exact") == pytest.approx(exact, rel=1e-12)


# schedules

def test_recursive_schedule_examples():
    s = Schedule.recursive(0.5, 0.5)
    assert next_stepsize(s) == 0.375
    assert next_stepsize(s) == 0.3046875


def test_constant_schedule():
    s = Schedule.constant(0.25)
    assert [next_stepsize(s) for _ in range(5)] == [0.25] * 5


def test_schedule_copy_and_reset():
    s = Schedule.recursive(0.9, 0.1)
    next_stepsize(s)
    c = s.copy()
    assert next_stepsize(c) == next_stepsize(s)
    s.reset()
    assert s.gamma == 0.9 and s.k == 0


@given(st.floats(0.01, 1.0), st.floats(0.001, 0.99))
@settings(max_examples=50)
def test_recursive_schedule_decreases_in_range(g0, eps):
    s = Schedule.recursive(g0, eps)
    prev = s.gamma
    for _ in range(200):
        g = next_stepsize(s)
        assert 0 < g <= prev
        prev = g


def test_ratio_schedule_stays_in_range():
    s = Schedule.ratio(lambda k: 1.0 / k, lambda k: 2.0 / k)
    gs = [next_stepsize(s) for _ in range(100)]
    assert all(0 < g <= 1 for g in gs)


@pytest.mark.parametrize("make", [
    lambda: Schedule.constant(0.0),
    lambda: Schedule.constant(1.5),
    lambda: Schedule.recursive(0.5, 1.0),
    lambda: Schedule.armijo(alpha=1.0),
    lambda: Schedule.ratio(lambda k: 2.0, lambda k: 1.0),
    lambda: Schedule("bogus", 0.5),
])
def test_schedule_validation(make):
    with pytest.raises(ConfigurationError):
        make()


def test_stepsize_range_violation():
    s = Schedule.ratio(lambda k: 1.0 / k, lambda k: 2.0 / k)
    s.params["alpha"] = lambda k: 5.0  # corrupt after validation
    with pytest.raises(ContractViolation) as e:
        next_stepsize(s)
    assert e.value.invariant == "stepsize-range"


# Armijo

def _half_square():
    return CompositeProblem(1, lambda x: 0.5 * float(x @ x), lambda x: x.copy())


def test_armijo_full_step_accepted():
    p = _half_square()
    assert armijo_linesearch(p, np.array([1.0]), np.array([-1.0]), -1.0,
                             alpha=0.1, delta=0.5, gamma0=1.0) == 1.0


def test_armijo_backtracks():
    # V(1 - g) <= 1/2 - 0.99 g holds iff g <= 0.02, so the first power of 1/2
    # below 0.02 is accepted
    p = _half_square()
    g = armijo_linesearch(p, np.array([1.0]), np.array([-1.0]), -1.0,
                          alpha=0.99, delta=0.5, gamma0=1.0)
    assert g <= 0.5
    assert g == 2.0 ** -6


def test_armijo_zero_direction():
    p = _half_square()
    assert armijo_linesearch(p, np.array([1.0]), np.zeros(1), 0.0, gamma0=0.7) == 0.7


def test_armijo_rejects_ascent_measure():
    with pytest.raises(ContractViolation) as e:
        armijo_linesearch(_half_square(), np.array([1.0]), np.array([1.0]), 1.0)
    assert e.value.invariant == "armijo-descent-direction"


def test_armijo_gives_up():
    p = CompositeProblem(1, lambda x: -float(x[0]) * 0 + 1e9 * float(x[0] > 0.0),
                         lambda x: np.zeros(1))
    with pytest.raises(LineSearchError):
        armijo_linesearch(p, np.array([0.0]), np.array([1.0]), -1.0, max_backtracks=5)


# merit helpers

def test_merit_helpers():
    assert relative_descent(2.0, 1.0) == pytest.approx(0.5)
    assert iterate_delta(np.array([3.0, 4.0]), np.zeros(2)) == pytest.approx(5.0)
    assert relative_error(np.array([1.0, 1.0]), np.zeros(2)) == pytest.approx(math.sqrt(2))
    assert relative_error(np.array([11.0]), np.array([10.0])) == pytest.approx(0.1)


def test_finite_difference_gradient():
    f = lambda x: float(np.sum(np.sin(x)) + x[0] * x[1])
    x = np.array([0.3, -1.2])
    expect = np.cos(x) + np.array([x[1], x[0]])
    assert np.allclose(finite_difference_gradient(f, x), expect, atol=1e-8)


def test_prox_residual_at_minimizer():
    c = np.array([1.0, -2.0])
    p = CompositeProblem(2, lambda x: 0.5 * float((x - c) @ (x - c)), lambda x: x - c)
    assert p.prox_residual(c) == 0.0
    assert p.prox_residual(np.zeros(2)) == pytest.approx(np.linalg.norm(c))
