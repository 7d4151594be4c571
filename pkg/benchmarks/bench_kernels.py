"""
Compare the compiled and pure-Python kernels.

Times one soft-thresholding call and one Gauss-Seidel sweep of each kind
per backend, and checks that the backends agree to a tolerance.

    python benchmarks/bench_kernels.py [--rows 500] [--cols 1000] [--repeat 5]
"""

import argparse
import time

import numpy as np

from scaopt.kernels import available_backends


def _best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _cases(rows, cols, seed=0):
    rng = np.random.default_rng(seed)
    A = np.asfortranarray(rng.standard_normal((rows, cols)))
    z = rng.standard_normal(rows)
    colsq = np.einsum("ij,ij->j", A, A)
    tau = np.full(cols, 0.5)
    idx = np.arange(cols, dtype=np.int64)
    v = rng.standard_normal(100_000)
    w = np.where(rng.random(rows) < 0.5, -1.0, 1.0)

    def soft(k):
        return k.soft_threshold_vec(v, 0.3)

    def lasso(k):
        x = np.zeros(cols)
        r = z.copy()
        k.lasso_cyclic_sweep(A, x, r, idx, tau, colsq, 1.0, 0.9)
        return x

    def logreg(k):
        x = np.zeros(cols)
        margin = np.zeros(rows)
        k.logreg_cyclic_sweep(A, w, x, margin, idx, tau, 0.01, 0.9, 1.0 / rows)
        return x

    return {"soft_threshold_vec": soft, "lasso_cyclic_sweep": lasso,
            "logreg_cyclic_sweep": logreg}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    ap.add_argument("--rows", type=int, default=500)
    ap.add_argument("--cols", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = available_backends()
    cases = _cases(args.rows, args.cols)
    names = list(backends)
    print(f"{'kernel':<22}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}{'max diff':>12}")
    for label, fn in cases.items():
        times, outs = {}, {}
        for n in names:
            times[n], outs[n] = _best_time(lambda: fn(backends[n]), args.repeat)
        row = f"{label:<22}" + "".join(f"{times[n] * 1e3:>10.2f}ms" for n in names)
        if "cython" in times:
            diff = float(np.max(np.abs(outs["cython"] - outs["python"])))
            row += f"{times['python'] / times['cython']:>9.1f}x{diff:>12.1e}"
        print(row)
    if "cython" not in backends:
        print("compiled backend unavailable; only the Python kernels were timed")


if __name__ == "__main__":
    main()
