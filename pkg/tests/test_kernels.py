import os
import subprocess
import sys

import numpy as np
import pytest

from scaopt import kernels
from scaopt.core import soft_threshold

BACKENDS = kernels.available_backends()
names = sorted(BACKENDS)


def _data(seed=0, q=30, m=12):
    rng = np.random.default_rng(seed)
    A = np.asfortranarray(rng.standard_normal((q, m)))
    return (A, rng.standard_normal(q), np.where(rng.random(q) < 0.5, -1.0, 1.0),
            np.einsum("ij,ij->j", A, A), np.arange(m, dtype=np.int64))


def _lasso(k, seed=0):
    A, z, _, colsq, idx = _data(seed)
    x = np.zeros(A.shape[1])
    r = z.copy()
    for _ in range(3):
        k.lasso_cyclic_sweep(A, x, r, idx, np.full(idx.size, 0.5), colsq, 0.8, 0.9)
    return x, r


def _logreg(k, seed=0):
    Z, _, w, _, idx = _data(seed)
    x = np.zeros(Z.shape[1])
    margin = np.zeros(Z.shape[0])
    for _ in range(3):
        k.logreg_cyclic_sweep(Z, w, x, margin, idx, np.full(idx.size, 0.5), 0.01, 0.9,
                              1.0 / Z.shape[0])
    return x, margin


def test_python_backend_always_available():
    assert "python" in BACKENDS
    assert kernels.BACKEND in BACKENDS


@pytest.mark.parametrize("name", names)
def test_soft_threshold_matches_scalar(name):
    v = np.linspace(-3, 3, 61)
    out = BACKENDS[name].soft_threshold_vec(v, 1.25)
    assert np.array_equal(out, [soft_threshold(t, 1.25) for t in v])


@pytest.mark.parametrize("name", names)
@pytest.mark.parametrize("fn", [_lasso, _logreg])
def test_backend_deterministic(name, fn):
    a, b = fn(BACKENDS[name]), fn(BACKENDS[name])
    assert all(np.array_equal(u, v) for u, v in zip(a, b))


@pytest.mark.parametrize("name", names)
def test_lasso_sweep_keeps_residual_consistent(name):
    A, z, _, _, _ = _data()
    x, r = _lasso(BACKENDS[name])
    assert np.allclose(r, z - A @ x, atol=1e-12)


@pytest.mark.parametrize("name", names)
def test_logreg_sweep_keeps_margin_consistent(name):
    Z, _, w, _, _ = _data()
    x, margin = _logreg(BACKENDS[name])
    assert np.allclose(margin, w * (Z @ x), atol=1e-12)


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled backend not built")
@pytest.mark.parametrize("fn", [_lasso, _logreg])
@pytest.mark.parametrize("seed", range(3))
def test_backends_agree(fn, seed):
    for u, v in zip(fn(BACKENDS["python"], seed), fn(BACKENDS["cython"], seed)):
        assert np.max(np.abs(u - v)) <= 1e-12


def test_environment_forces_python_backend():
    env = dict(os.environ, SCAOPT_KERNELS="python")
    out = subprocess.run([sys.executable, "-c", "import scaopt.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
