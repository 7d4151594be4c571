import warnings

import numpy as np
import pytest

from scaopt.core import CompositeProblem, Schedule, project_box
from scaopt.errors import ConfigurationError, ContractViolation
from scaopt.network import GraphSequence, GraphStep, WeightMatrix, build_weights
from scaopt.problems import (generate_huber, generate_localization, huber_surrogate_solve)
from scaopt.sonata import (AgentProblem, SonataConfig, aug_dgm, diging, huber_agents,
                           linearized_agent, localization_agents, merit_D, merit_J,
                           sonata_communicate, sonata_init, sonata_local_step, sonata_run)


def _quiet_run(*args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return sonata_run(*args, **kw)


def _quadratic_agents(I, m, seed, same=False):
    rng = np.random.default_rng(seed)
    Q, b = [], []
    for i in range(I):
        if i == 0 or not same:
            M = rng.standard_normal((m, m))
            Qi, bi = M @ M.T + np.eye(m), rng.standard_normal(m)
        Q.append(Qi)
        b.append(bi)
    fs = [lambda x, Q=Q[i], b=b[i]: 0.5 * float(x @ Q @ x) - float(b @ x) for i in range(I)]
    gs = [lambda x, Q=Q[i], b=b[i]: Q @ x - b for i in range(I)]
    prob = CompositeProblem(m, lambda x: sum(f(x) for f in fs), lambda x: sum(g(x) for g in gs))
    return fs, gs, prob, sum(Q), sum(b)


# local step

def test_linearized_closed_form():
    ag = linearized_agent(lambda x: 0.0, lambda x: np.zeros(2), 2.0)
    x_half, x_tilde = sonata_local_step(ag, np.array([1.0, 2.0]), np.array([0.5, -1.0]), 2, 1.0)
    assert np.array_equal(x_tilde, [0.5, 3.0])
    assert np.array_equal(x_half, x_tilde)


def test_linearized_fixed_point():
    ag = linearized_agent(lambda x: 0.5 * float(x @ x), lambda x: x.copy(), 3.0)
    x = np.zeros(3)
    x_half, x_tilde = sonata_local_step(ag, x, np.zeros(3), 3, 0.5)
    assert np.array_equal(x_tilde, x) and np.array_equal(x_half, x)


def test_huber_agent_matches_problem_solve():
    inst = generate_huber(3, 4, 6, seed=0)
    ags = huber_agents(inst, "quadratic", 1.5)
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(4), rng.standard_normal(4)
    _, xt = sonata_local_step(ags[1], x, y, 3, 0.3)
    ref = huber_surrogate_solve(inst, 1, x, 3 * y - inst.grad_f_i(1, x), "quadratic", 1.5)
    assert np.allclose(xt, ref, atol=1e-14)


def test_local_step_validates_gamma():
    ag = linearized_agent(lambda x: 0.0, lambda x: np.zeros(1), 1.0)
    with pytest.raises(ConfigurationError):
        sonata_local_step(ag, np.zeros(1), np.zeros(1), 1, 0.0)


# communication

def test_single_agent_is_gradient_descent():
    fs, gs, prob, Q, b = _quadratic_agents(1, 3, 0)
    Q, b = Q / np.linalg.eigvalsh(Q)[-1], b / np.linalg.eigvalsh(Q)[-1]
    f = lambda x: 0.5 * float(x @ Q @ x) - float(b @ x)
    g = lambda x: Q @ x - b
    prob = CompositeProblem(3, f, g)
    gam = 0.5
    r = _quiet_run([linearized_agent(f, g, 1.0)], prob,
                   SonataConfig(Schedule.constant(gam), weights=WeightMatrix(np.eye(1), "column"),
                                max_iters=30), np.ones(3), record_iterates=True)
    x = np.ones(3)
    for k in range(1, 31):
        x = x - gam * g(x)
        assert np.allclose(r.iterates[k][0], x, atol=1e-14)


def test_doubly_stochastic_keeps_phi():
    fs, gs, prob, _, _ = _quadratic_agents(4, 2, 1)
    ags = [linearized_agent(fs[i], gs[i], 4.0) for i in range(4)]
    seq = GraphSequence("permuted_ring_plus_random", 4, seed=1, symmetric=True)
    r = sonata_run(ags, prob, SonataConfig(Schedule.recursive(0.5, 0.01), seq,
                                           weight_rule="metropolis", max_iters=20),
                   np.zeros(2))
    assert np.allclose(r.state.phi, 1.0, atol=1e-15)


def test_constant_gradients_tracking_invariant():
    I, m = 6, 2
    c = np.random.default_rng(2).standard_normal((I, m))
    ags = [linearized_agent(lambda x, c=c[i]: float(c @ x), lambda x, c=c[i]: c.copy(), 6.0)
           for i in range(I)]
    seq = GraphSequence("permuted_ring_plus_random", I, seed=2)
    st = sonata_init(ags, np.zeros(m))
    for k in range(50):
        x_half = np.array([sonata_local_step(ags[i], st.x[i], st.y[i], I, 0.1)[0]
                           for i in range(I)])
        st = sonata_communicate(st, build_weights(seq.step(k), "push_sum"), x_half, c.copy())
        assert st.tracking_gap() <= 1e-12
    # with constant gradients the weighted y average never changes
    assert np.allclose(st.phi @ st.y, c.sum(axis=0), atol=1e-12)


def test_communicate_rejects_row_stochastic():
    ags = [linearized_agent(lambda x: 0.0, lambda x: np.zeros(1), 1.0)] * 2
    st = sonata_init(ags, np.zeros(1))
    W = WeightMatrix(np.array([[0.5, 0.5], [0.2, 0.8]]), "row")
    with pytest.raises(ContractViolation):
        sonata_communicate(st, W, st.x, st.grads)


# runs

def test_identical_agents_stay_consensual():
    fs, gs, prob, Q, b = _quadratic_agents(5, 3, 3, same=True)
    ags = [linearized_agent(fs[i], gs[i], 30.0) for i in range(5)]
    # phi stays 1 under doubly stochastic weights, so identical agents take
    # identical steps (with push-sum weights y_i picks up 1/phi_i factors)
    seq = GraphSequence("permuted_ring_plus_random", 5, seed=3, symmetric=True)
    r = sonata_run(ags, prob, SonataConfig(Schedule.recursive(0.9, 0.01), seq,
                                           weight_rule="metropolis", max_iters=200),
                   np.ones(3))
    assert np.all(r.column("D") <= 1e-13)
    assert r.column("J")[-1] < 1e-3 * r.column("J")[0]


def test_huber_run_converges_to_centralized_solution():
    inst = generate_huber(10, 20, 10, seed=0)
    prob = inst.composite()
    seq = GraphSequence("permuted_ring_plus_random", 10, seed=0)
    r = sonata_run(huber_agents(inst, "quadratic", 1.5), prob,
                   SonataConfig(Schedule.recursive(0.1, 0.01), seq, max_iters=1000),
                   np.zeros(20))
    J, D = r.column("J"), r.column("D")
    hit = np.flatnonzero((J <= 1e-4) & (D <= 1e-8))
    assert hit.size and r.column("messages")[hit[0]] <= 2000


def test_localization_trend_and_accuracy():
    inst = generate_localization(10, 2, seed=0, noise=0.0)
    seq = GraphSequence("permuted_ring_plus_random", 10, seed=0)
    x0 = np.random.default_rng(12).random(inst.m)
    r = sonata_run(localization_agents(inst, "partial_convex", 5.0), inst.composite(),
                   SonataConfig(Schedule.recursive(0.1, 1e-4), seq, max_iters=1500), x0)
    J = r.column("J")
    wmin = [J[:k].min() for k in range(100, J.size + 1, 100)]
    assert all(b <= a for a, b in zip(wmin, wmin[1:])) and wmin[-1] < 1e-2 * wmin[0]
    err = np.abs(r.state.x - inst.targets.ravel()[None, :])
    assert err.max() <= 1e-2


def test_merit_j_closed_form():
    prob = CompositeProblem(3, lambda x: 0.5 * float(x @ x), lambda x: x.copy())
    x = np.array([1.0, -2.0, 2.0])
    assert merit_J(prob, x) == pytest.approx(3.0)
    assert merit_J(prob, np.zeros(3)) == 0.0


def test_merit_d():
    ags = [linearized_agent(lambda x: 0.0, lambda x: np.zeros(1), 1.0)] * 2
    st = sonata_init(ags, np.array([[0.0], [2.0]]))
    assert merit_D(st) == pytest.approx(np.sqrt(2.0))


def test_special_cases_match_transcriptions():
    I, m = 4, 2
    fs, gs, prob, _, _ = _quadratic_agents(I, m, 5)
    ring = GraphStep(I, tuple((i, (i + 1) % I) for i in range(I))).symmetrized()
    W = build_weights(ring, "metropolis")
    ags = [linearized_agent(fs[i], gs[i], float(I)) for i in range(I)]
    x0 = np.random.default_rng(5).standard_normal((I, m))
    for variant, ref in (("atc", aug_dgm(gs, W.W, x0, 0.05, 40)),
                         ("caa", diging(gs, W.W, x0, 0.05, 40))):
        r = _quiet_run(ags, prob, SonataConfig(Schedule.constant(0.05), weights=W, max_iters=40,
                                               x_variant=variant, y_variant=variant),
                       x0, record_iterates=True)
        assert max(np.max(np.abs(a - b)) for a, b in zip(ref, r.iterates)) <= 1e-12


# configuration

def test_caa_x_rejected_with_constraints():
    box = lambda v, block=None: project_box(v, 0.0, 1.0)
    prob = CompositeProblem(1, lambda x: 0.0, lambda x: np.zeros(1), project=box)
    ags = [linearized_agent(lambda x: 0.0, lambda x: np.zeros(1), 1.0, prob)]
    cfg = SonataConfig(Schedule.recursive(0.5, 0.1), weights=WeightMatrix(np.eye(1), "column"),
                       x_variant="caa")
    with pytest.raises(ConfigurationError):
        sonata_run(ags, prob, cfg, np.zeros(1))


def test_constant_schedule_warns():
    prob = CompositeProblem(1, lambda x: 0.0, lambda x: np.zeros(1))
    ags = [linearized_agent(lambda x: 0.0, lambda x: np.zeros(1), 1.0)]
    cfg = SonataConfig(Schedule.constant(0.5), weights=WeightMatrix(np.eye(1), "column"),
                       max_iters=2)
    with pytest.warns(RuntimeWarning):
        sonata_run(ags, prob, cfg, np.zeros(1))


@pytest.mark.parametrize("kw", [dict(x_variant="both"), dict(graph=None, weights=None),
                                dict(schedule=Schedule.armijo()), dict(max_iters=-1)])
def test_config_validation(kw):
    base = dict(schedule=Schedule.constant(0.5), weights=WeightMatrix(np.eye(1), "column"))
    base.update(kw)
    with pytest.raises(ConfigurationError):
        SonataConfig(**base)


def test_infeasible_agent_detected():
    box = lambda v, block=None: project_box(v, 0.0, 1.0)
    # -x is not stationary at 0, so the run takes a step
    prob = CompositeProblem(1, lambda x: -float(x[0]), lambda x: -np.ones(1), project=box)
    rogue = AgentProblem(lambda x: -float(x[0]), lambda x: -np.ones(1), lambda x, pi: x + 5.0, 1.0)
    cfg = SonataConfig(Schedule.recursive(0.5, 0.1), weights=WeightMatrix(np.eye(1), "column"),
                       max_iters=3)
    with pytest.raises(ContractViolation) as e:
        sonata_run([rogue], prob, cfg, np.zeros(1))
    assert e.value.invariant == "feasibility"


def test_agent_count_mismatch():
    ags = [linearized_agent(lambda x: 0.0, lambda x: np.zeros(1), 1.0)] * 2
    with pytest.raises(ConfigurationError):
        sonata_init(ags, np.zeros((3, 1)))
