import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scaopt.errors import ConfigurationError, ContractViolation
from scaopt.network import (GraphSequence, GraphStep, PushSumState, WeightMatrix, build_weights,
                            consensus_step, fit_log_decay, implied_weights,
                            perturbed_push_sum_run, push_sum_step, read_edge_list,
                            tracking_step, union, write_edge_list)


def _path2():
    return GraphStep(2, ((0, 1), (1, 0)))


def test_metropolis_two_nodes():
    W = build_weights(_path2(), "metropolis")
    assert np.array_equal(W.W, [[0.5, 0.5], [0.5, 0.5]])
    assert W.tag == "doubly"


def test_push_sum_two_nodes():
    A = build_weights(GraphStep(2, ((0, 1),)), "push_sum")
    assert np.array_equal(A.W, [[0.5, 0.0], [0.5, 1.0]])
    assert A.tag == "column"


def test_single_node():
    for rule in ("metropolis", "max_degree", "push_sum"):
        assert np.array_equal(build_weights(GraphStep(1), rule).W, [[1.0]])


def test_doubly_stochastic_rules_need_symmetric_graph():
    g = GraphStep(2, ((0, 1),))
    for rule in ("metropolis", "max_degree"):
        with pytest.raises(ConfigurationError):
            build_weights(g, rule)
    with pytest.raises(ConfigurationError):
        build_weights(_path2(), "laplacian")
    with pytest.raises(ConfigurationError):
        build_weights(_path2(), "nope")


@given(st.integers(2, 9), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_weights_are_stochastic_and_compliant(I, seed):
    seq = GraphSequence("permuted_ring_plus_random", I, seed=seed, symmetric=True)
    g = seq.step(seed % 7)
    for rule, kw in (("metropolis", {}), ("max_degree", {}),
                     ("laplacian", dict(lam=0.5 / I)), ("push_sum", {})):
        W = build_weights(g, rule, **kw)
        assert W.compliant(g)
        assert np.allclose(W.W.sum(axis=0), 1.0, atol=1e-12)
        if rule != "push_sum":
            assert np.allclose(W.W.sum(axis=1), 1.0, atol=1e-12)


def test_weight_matrix_contracts():
    with pytest.raises(ContractViolation):
        WeightMatrix(np.array([[0.5, 0.6], [0.5, 0.4]]), "row")
    with pytest.raises(ContractViolation):
        WeightMatrix(np.array([[1.5, -0.5], [0.0, 1.0]]), "row")
    A = WeightMatrix(np.array([[0.5, 0.0], [0.5, 1.0]]), "column")
    with pytest.raises(ContractViolation) as e:
        consensus_step(np.zeros(2), A)
    assert e.value.invariant == "stochasticity-tag"


def test_graph_sequence_steps():
    seq = GraphSequence("permuted_ring_plus_random", 10, seed=3)
    assert seq.step(4) == GraphSequence("permuted_ring_plus_random", 10, seed=3).step(4)
    assert all(seq.step(k).strongly_connected() for k in range(20))
    assert seq.step(0) != seq.step(1)
    sym = GraphSequence("permuted_ring_plus_random", 10, seed=3, symmetric=True)
    assert sym.step(2).is_symmetric()


def test_graph_sequence_validation():
    with pytest.raises(ConfigurationError):
        GraphSequence("static", 3, graph=GraphStep(3, ((0, 1),)))
    a, b = GraphStep(3, ((0, 1), (1, 2))), GraphStep(3, ((2, 0),))
    with pytest.raises(ConfigurationError):
        GraphSequence("custom", 3, steps=[a, b], B=1)
    seq = GraphSequence("custom", 3, steps=[a, b], B=2)
    assert union([a, b]).strongly_connected()
    assert seq.step(3) == b
    with pytest.raises(ConfigurationError):
        GraphStep(2, ((0, 2),))


# consensus

def test_consensus_example():
    W = build_weights(_path2(), "metropolis")
    x = np.array([0.0, 2.0])
    out = consensus_step(x, W)
    assert np.array_equal(out, [1.0, 1.0])
    assert out.sum() == x.sum()
    c = np.full((2, 3), 4.2)
    assert np.allclose(consensus_step(c, W), c)


def test_consensus_ring_decays():
    seq = GraphSequence("permuted_ring_plus_random", 10, seed=0, symmetric=True)
    x = np.random.default_rng(0).standard_normal((10, 2))
    errs = []
    for k in range(200):
        errs.append(float(np.max(np.linalg.norm(x - x.mean(axis=0), axis=1))))
        x = consensus_step(x, build_weights(seq.step(k), "metropolis"))
    slope, r2, n = fit_log_decay(errs)
    assert slope < 0 and n >= 3


# push-sum

def test_push_sum_example():
    A = WeightMatrix(np.array([[0.5, 1 / 3], [0.5, 2 / 3]]), "column")
    nxt = push_sum_step(PushSumState.start([[1.0], [4.0]]), A)
    assert np.allclose(nxt.phi, [5 / 6, 7 / 6])
    assert nxt.phi.sum() == pytest.approx(2.0)
    assert nxt.weighted_sum() == pytest.approx(5.0)


def test_push_sum_doubly_reduces_to_consensus():
    W = build_weights(GraphSequence("permuted_ring_plus_random", 6, seed=1,
                                    symmetric=True).step(0), "metropolis")
    x = np.random.default_rng(1).standard_normal((6, 2))
    nxt = push_sum_step(PushSumState.start(x), W)
    assert np.allclose(nxt.phi, 1.0)
    assert np.allclose(nxt.x, consensus_step(x, W), atol=1e-15)


def test_push_sum_reaches_average():
    seq = GraphSequence("permuted_ring_plus_random", 10, seed=2)
    x0 = np.random.default_rng(2).standard_normal((10, 3))
    run = perturbed_push_sum_run(seq, "push_sum", x0, 300, record_states=True)
    assert np.max(np.abs(run.states[-1].x - x0.mean(axis=0))) <= 1e-10
    assert max(run.invariant_drift) <= 1e-12


def test_implied_weights_row_stochastic():
    A = build_weights(GraphStep(3, ((0, 1), (1, 2), (2, 0))), "push_sum")
    W = implied_weights(A, np.array([0.5, 1.0, 1.5]))
    assert np.allclose(W.sum(axis=1), 1.0)


# tracking

def test_tracking_constant_signal_is_push_sum():
    A = build_weights(GraphStep(3, ((0, 1), (1, 2), (2, 0))), "push_sum")
    s = PushSumState.start(np.arange(3.0))
    u = np.ones((3, 1))
    a, b = tracking_step(s, A, u, u), push_sum_step(s, A)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.phi, b.phi)


def test_tracking_invariant():
    seq = GraphSequence("permuted_ring_plus_random", 8, seed=4)
    rng = np.random.default_rng(4)
    u_old = rng.standard_normal((8, 2))
    s = PushSumState.start(u_old)
    for k in range(100):
        u_new = u_old + rng.standard_normal((8, 2)) / (k + 1)
        s = tracking_step(s, build_weights(seq.step(k), "push_sum"), u_new, u_old)
        assert np.max(np.abs(s.weighted_sum() - u_new.sum(axis=0))) <= 1e-12
        u_old = u_new


def test_perturbed_zero_matches_push_sum():
    seq = GraphSequence("permuted_ring_plus_random", 5, seed=5)
    x0 = np.random.default_rng(5).standard_normal((5, 1))
    run = perturbed_push_sum_run(seq, "push_sum", x0, 30, lambda k, phi: None, record_states=True)
    s = PushSumState.start(x0)
    for k in range(30):
        s = push_sum_step(s, build_weights(seq.step(k), "push_sum"))
        assert np.array_equal(s.x, run.states[k + 1].x)


def test_perturbed_summable_errors_vanish():
    seq = GraphSequence("permuted_ring_plus_random", 10, seed=6)
    x0 = np.random.default_rng(6).standard_normal((10, 1))
    run = perturbed_push_sum_run(seq, "push_sum", x0, 2000,
                                 lambda k, phi: np.full((10, 1), 1.0 / (k + 1) ** 2))
    assert run.errors[-1] < 1e-8


def test_perturbed_constant_error_bounded():
    seq = GraphSequence("permuted_ring_plus_random", 10, seed=7)
    rng = np.random.default_rng(7)
    x0 = rng.standard_normal((10, 1))
    eps = 0.1 * rng.choice([-1.0, 1.0], size=(10, 1))
    run = perturbed_push_sum_run(seq, "push_sum", x0, 10_000, lambda k, phi: eps)
    tail = np.array(run.errors[100:])
    assert np.all(np.isfinite(tail)) and tail.max() < 10.0
    assert tail[-1000:].max() <= 1.5 * tail[:1000].max()


def test_fit_log_decay():
    e = 3.0 * np.exp(-0.2 * np.arange(50))
    slope, r2, n = fit_log_decay(e)
    assert slope == pytest.approx(-0.2) and r2 == pytest.approx(1.0) and n == 50
    with pytest.raises(ConfigurationError):
        fit_log_decay([1e-20, 1e-20, 1e-20])


# IO

def test_edge_list_roundtrip(tmp_path):
    seq = GraphSequence("permuted_ring_plus_random", 7, seed=8)
    steps = [seq.step(k) for k in range(4)]
    p = tmp_path / "g.edges"
    write_edge_list(p, steps)
    assert read_edge_list(p) == steps


def test_edge_list_out_of_order(tmp_path):
    p = tmp_path / "g.edges"
    p.write_text("nodes 2\nstep 1\n0 1\n")
    with pytest.raises(ConfigurationError):
        read_edge_list(p)
