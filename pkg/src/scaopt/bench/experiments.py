"""
Experiment runners behind ``scaopt run``.

An experiment is a (problem kind, algorithm module) pair:

========================  =========  =====================================
problem ``kind``          module     trace columns
========================  =========  =====================================
``lasso``                 flexa      iteration objective re merit ...
``logreg``                flexa      iteration objective merit ...
``huber``                 sonata     round messages J D M ...
``localization``          sonata     round messages J D M ...
``sparse_ls``, ``nnls``   mm         iteration objective chain terms ...
========================  =========  =====================================

Every parameter is validated (type, range, file existence) by
:func:`prepare` before any computation starts.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from ..core import Schedule
from ..errors import ConfigurationError
from ..flexa import flexa_lasso, flexa_logreg
from ..mm import MMConfig, nnls_mm, sparse_ls_mm
from ..network import GraphSequence, GraphStep, read_edge_list
from ..penalties import KINDS as PENALTY_KINDS, DCPenalty
from ..problems import (HuberInstance, LassoInstance, LogRegInstance, generate_huber,
                        generate_lasso, generate_localization, generate_logreg,
                        read_matrix_csv)
from ..sonata import SonataConfig, huber_agents, localization_agents, sonata_run
from .config import RunConfig
from .oracles import oracle_proxgrad
from .trace import TraceWriter, default_output_dir, write_summary

__all__ = ["Outcome", "Prepared", "prepare", "run_experiment", "KINDS"]

KINDS = {"lasso": "flexa", "logreg": "flexa", "huber": "sonata",
         "localization": "sonata", "sparse_ls": "mm", "nnls": "mm"}

_MISSING = object()


class _Params:
    """Typed, range-checked access to one config section."""

    def __init__(self, cfg: RunConfig, section: str, values: Dict[str, Any]):
        self.cfg, self.section, self.values = cfg, section, values
        self.used = set()

    def get(self, key, default=_MISSING, kind=float, lo=None, hi=None,
            lo_open=False, choices=None):
        self.used.add(key)
        if key not in self.values:
            if default is _MISSING:
                raise self.cfg.error(self.section, None, f"[{self.section}] needs {key!r}")
            return default
        v = self.values[key]
        err = lambda msg: self.cfg.error(self.section, key, f"{key}: {msg}")
        if kind is bool:
            if not isinstance(v, bool):
                raise err(f"expected true/false, got {v!r}")
        elif kind is int:
            if isinstance(v, bool) or not isinstance(v, int):
                raise err(f"expected an integer, got {v!r}")
        elif kind is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise err(f"expected a number, got {v!r}")
            v = float(v)
            if not np.isfinite(v):
                raise err("must be finite")
        else:
            v = str(v)
        if choices is not None and v not in choices:
            raise err(f"must be one of {', '.join(map(str, choices))}")
        if lo is not None and (v <= lo if lo_open else v < lo):
            raise err(f"must be {'>' if lo_open else '>='} {lo}")
        if hi is not None and v > hi:
            raise err(f"must be <= {hi}")
        return v

    def file(self, key):
        p = self.get(key, kind=str)
        path = self.cfg.resolve(p)
        if not os.path.isfile(path):
            raise self.cfg.error(self.section, key, f"{key}: file not found: {p}")
        return path

    def finish(self, extra=()):
        unknown = sorted(set(self.values) - self.used - set(extra))
        if unknown:
            raise self.cfg.error(self.section, unknown[0],
                                 f"unknown key {unknown[0]!r} in [{self.section}]")


@dataclass
class Prepared:
    """Validated experiment ready to execute."""

    cfg: RunConfig
    columns: List[str]
    execute: Callable[[TraceWriter], Dict[str, Any]]


@dataclass
class Outcome:
    trace_path: str
    summary_path: str
    summary: Dict[str, Any]


#%% FLEXA

_FLEXA_COLS = ["iteration", "objective", "re", "merit", "stepsize", "selected", "tau"]


def _flexa_params(cfg, pr, a, b):
    opts = dict(
        sigma=a.get("sigma", 0.0, lo=0.0, hi=1.0),
        mode=a.get("mode", "jacobi", kind=str, choices=("jacobi", "gauss_jacobi")),
        workers=a.get("workers", 1, kind=int, lo=1),
        n_groups=a.get("n_groups", 8, kind=int, lo=1),
        adaptive=a.get("adaptive", True, kind=bool),
        gamma0=a.get("gamma0", 0.9, lo=0.0, hi=1.0, lo_open=True),
        theta=a.get("theta", 1e-7, lo=0.0, hi=1.0, lo_open=True),
        max_iters=b.get("max_iters", 5000, kind=int, lo=1),
        tol=b.get("tol", 1e-6, lo=0.0, lo_open=True),
    )
    if "tau0" in a.values:
        opts["tau0"] = a.get("tau0", lo=0.0, lo_open=True)
    return opts


def _prepare_lasso(cfg, pr, a, b):
    if "a_file" in pr.values:
        A = pr.file("a_file")
        z = pr.file("z_file")
        lam = pr.get("lam", lo=0.0, lo_open=True)
        v_star = pr.get("v_star", None, lo=0.0, lo_open=True)

        def build():
            AA, zz = read_matrix_csv(A), read_matrix_csv(z).ravel()
            if AA.shape[0] != zz.size:
                raise ConfigurationError(f"{A} and {z} disagree on the number of rows")
            return LassoInstance(AA, zz, lam, None, v_star)
    else:
        m = pr.get("m", 1000, kind=int, lo=1)
        q = pr.get("q", 500, kind=int, lo=2)
        frac = pr.get("sparsity", 0.01, lo=0.0, hi=1.0, lo_open=True)
        lam = pr.get("lam", 1.0, lo=0.0, lo_open=True)
        seed = pr.get("seed", cfg.seed, kind=int, lo=0)
        build = lambda: generate_lasso(m, q, frac, seed=seed, lam=lam)
    opts = _flexa_params(cfg, pr, a, b)
    return lambda: flexa_lasso(build(), **opts), build


def _prepare_logreg(cfg, pr, a, b):
    if "z_file" in pr.values:
        Zp, wp = pr.file("z_file"), pr.file("w_file")
        lam = pr.get("lam", 0.01, lo=0.0)
        norm = pr.get("normalize", True, kind=bool)

        def build():
            return LogRegInstance(read_matrix_csv(Zp), read_matrix_csv(wp).ravel(), lam, norm)
    else:
        q = pr.get("q", 400, kind=int, lo=2)
        m = pr.get("m", 200, kind=int, lo=1)
        lam = pr.get("lam", 0.01, lo=0.0)
        frac = pr.get("sparsity", 0.1, lo=0.0, hi=1.0, lo_open=True)
        noise = pr.get("noise", 0.1, lo=0.0)
        norm = pr.get("normalize", True, kind=bool)
        seed = pr.get("seed", cfg.seed, kind=int, lo=0)
        build = lambda: generate_logreg(q, m, seed=seed, lam=lam, sparsity_fraction=frac,
                                        noise=noise, normalize=norm)
    opts = _flexa_params(cfg, pr, a, b)
    return lambda: flexa_logreg(build(), **opts), build


def _flexa_execute(run, build, kind):
    def execute(tw: TraceWriter):
        res = run()
        for row in res.trace:
            r = dict(row)
            if "re" not in r or r["re"] is None:
                r["re"] = r["merit"]
            tw.append(r)
        last = res.trace[-1]
        out = dict(iterations=res.iterations, messages=0, converged=res.converged,
                   final_objective=last["objective"], final_merit=last["merit"],
                   final_tau=res.tau)
        if kind == "lasso" and last.get("re") is not None:
            out["re"] = last["re"]
        return out
    return execute


#%% SONATA

_SONATA_COLS = ["round", "messages", "J", "D", "M", "mean_objective", "stepsize",
                "consensus_err_x", "tracking_err_y"]


def _graph_sequence(cfg, g, I):
    kind = g.get("kind", "permuted_ring_plus_random", kind=str,
                 choices=("permuted_ring_plus_random", "ring", "file"))
    seed = g.get("seed", cfg.seed, kind=int, lo=0)
    sym = g.get("symmetric", False, kind=bool)
    if kind == "file":
        path = g.file("edge_file")

        def build():
            steps = read_edge_list(path)
            if steps[0].I != I:
                raise ConfigurationError(f"{path} has {steps[0].I} nodes, expected {I}")
            return GraphSequence("custom", I, steps=steps, symmetric=sym)
        return build
    if kind == "ring":
        step = GraphStep(I, tuple((i, (i + 1) % I) for i in range(I)))
        return lambda: GraphSequence("static", I, graph=step, symmetric=sym)
    return lambda: GraphSequence("permuted_ring_plus_random", I, seed=seed, symmetric=sym)


def _schedule(a):
    kind = a.get("schedule", "recursive", kind=str, choices=("recursive", "constant"))
    gamma0 = a.get("gamma0", 0.1, lo=0.0, hi=1.0, lo_open=True)
    if kind == "constant":
        return Schedule.constant(gamma0)
    return Schedule.recursive(gamma0, a.get("mu", 0.01, lo=0.0, hi=1.0, lo_open=True))


def _sonata_common(cfg, a, g, b, I, variants, default_variant, default_tau):
    variant = a.get("variant", default_variant, kind=str, choices=variants)
    tau = a.get("tau", default_tau[variant], lo=0.0, lo_open=True)
    sched = _schedule(a)
    xv = a.get("x_variant", "atc", kind=str, choices=("atc", "caa"))
    yv = a.get("y_variant", "caa", kind=str, choices=("atc", "caa"))
    rule = a.get("weight_rule", "push_sum", kind=str,
                 choices=("push_sum", "metropolis", "max_degree", "laplacian"))
    workers = a.get("workers", 1, kind=int, lo=1)
    seq = _graph_sequence(cfg, g, I)
    max_iters = b.get("max_iters", 1000, kind=int, lo=1)
    max_msg = b.get("max_messages", None, kind=int, lo=2)
    if max_msg is not None:
        max_iters = min(max_iters, max_msg // 2)
    tol = b.get("tol", 0.0, lo=0.0)
    if rule != "push_sum" and not g.values.get("symmetric", False):
        raise cfg.error("algorithm", "weight_rule",
                        f"weight_rule: {rule} needs 'symmetric = true' in [graph]")

    def config():
        return SonataConfig(sched, seq(), x_variant=xv, y_variant=yv, weight_rule=rule,
                            max_iters=max_iters, tol=tol, workers=workers)
    return variant, tau, config


def _prepare_huber(cfg, pr, a, g, b):
    if "b_file" in pr.values:
        Bp, dp = pr.file("b_file"), pr.file("d_file")
        I = pr.get("agents", kind=int, lo=1)
        alpha = pr.get("alpha", lo=0.0, lo_open=True)

        def build():
            Bm, dv = read_matrix_csv(Bp), read_matrix_csv(dp).ravel()
            if Bm.shape[0] != dv.size or Bm.shape[0] % I:
                raise ConfigurationError("b_file rows must match d_file and split evenly over agents")
            return HuberInstance(np.split(Bm, I), np.split(dv, I), alpha)
    else:
        I = pr.get("agents", 10, kind=int, lo=1)
        m = pr.get("m", 20, kind=int, lo=1)
        n_i = pr.get("n_i", 10, kind=int, lo=1)
        sigma = pr.get("sigma", 0.1, lo=0.0, lo_open=True)
        scale = pr.get("outlier_scale", 5.0, lo=0.0)
        seed = pr.get("seed", cfg.seed, kind=int, lo=0)
        build = lambda: generate_huber(I, m, n_i, sigma, seed=seed, outlier_scale=scale)
    oracle = pr.get("oracle", True, kind=bool)
    variant, tau, config = _sonata_common(cfg, a, g, b, I, ("linear", "quadratic"), "quadratic",
                                          {"linear": 2.0, "quadratic": 1.5})

    def execute(tw):
        inst = build()
        prob = inst.composite()
        res = sonata_run(huber_agents(inst, variant, tau), prob, config(), np.zeros(inst.m))
        extra = {}
        if oracle:
            x_c, _ = oracle_proxgrad(prob, tol=1e-12, L=inst.lipschitz())
            extra["centralized_gap"] = float(np.linalg.norm(res.state.x_bar() - x_c))
        return _sonata_finish(tw, res, extra)
    return execute


def _prepare_localization(cfg, pr, a, g, b):
    I = pr.get("agents", 10, kind=int, lo=1)
    n = pr.get("targets", 2, kind=int, lo=1)
    noise = pr.get("noise", 0.0, lo=0.0)
    seed = pr.get("seed", cfg.seed, kind=int, lo=0)
    min_obs = pr.get("min_observers", 3, kind=int, lo=1, hi=I)
    variant, tau, config = _sonata_common(cfg, a, g, b, I, ("linear", "partial_convex"),
                                          "partial_convex",
                                          {"linear": 7.0, "partial_convex": 5.0})

    def execute(tw):
        inst = generate_localization(I, n, seed=seed, noise=noise, min_observers=min_obs)
        x0 = np.random.default_rng([cfg.seed, 1]).random(inst.m)
        res = sonata_run(localization_agents(inst, variant, tau), inst.composite(),
                         config(), x0)
        err = float(np.max(np.abs(res.state.x_bar() - inst.targets.ravel())))
        return _sonata_finish(tw, res, {"target_error": err})
    return execute


def _sonata_finish(tw, res, extra):
    for row in res.trace:
        tw.append(row)
    last = res.trace[-1]
    out = dict(iterations=res.iterations, messages=last["messages"], converged=res.converged,
               final_objective=last["mean_objective"], final_merit=last["M"],
               J=last["J"], D=last["D"])
    out.update(extra)
    return out


#%% MM

_MM_COLS = ["iteration", "objective", "surrogate_new", "surrogate_old",
            "relative_descent", "iterate_delta"]


def _sparse_data(q, m, frac, seed, nonneg):
    rng = np.random.default_rng(seed)
    A = rng.random((q, m)) + 0.1 if nonneg else rng.standard_normal((q, m)) / np.sqrt(q)
    x = np.zeros(m)
    k = max(1, int(round(frac * m)))
    idx = rng.choice(m, size=k, replace=False)
    x[idx] = rng.random(k) + 0.5 if nonneg else rng.standard_normal(k)
    z = A @ x + 0.01 * rng.standard_normal(q)
    return A, (np.abs(z) if nonneg else z)


def _prepare_mm(cfg, pr, a, b, kind):
    q = pr.get("q", 60, kind=int, lo=1)
    m = pr.get("m", 100, kind=int, lo=1)
    frac = pr.get("sparsity", 0.1, lo=0.0, hi=1.0, lo_open=True)
    seed = pr.get("seed", cfg.seed, kind=int, lo=0)
    mmc = MMConfig(max_iters=b.get("max_iters", 500, kind=int, lo=1),
                   tol_relative_descent=b.get("tol", 1e-9, lo=0.0, lo_open=True),
                   tol_iterate_delta=b.get("tol", 1e-9, lo=0.0, lo_open=True))
    if kind == "sparse_ls":
        lam = pr.get("lam", 0.05, lo=0.0, lo_open=True)
        pen = pr.get("penalty", "log", kind=str, choices=tuple(PENALTY_KINDS))
        theta = pr.get("theta", 2.0, lo=0.0, lo_open=True)
        variant = a.get("variant", "double_loop", kind=str, choices=("double_loop", "one_step"))
        major = a.get("majorizer", "dc", kind=str, choices=("dc", "adhoc"))
        if major == "adhoc" and pen not in ("log", "lp_plus"):
            raise cfg.error("algorithm", "majorizer",
                            "majorizer: adhoc is available for log and lp_plus only")
        run = lambda: sparse_ls_mm(*_sparse_data(q, m, frac, seed, False), lam,
                                   DCPenalty(pen, theta), variant=variant, config=mmc,
                                   majorizer=major)
    else:
        variant = a.get("variant", "grad_proj", kind=str, choices=("grad_proj", "multiplicative"))
        run = lambda: nnls_mm(*_sparse_data(q, m, frac, seed, True), variant=variant, config=mmc)

    def execute(tw):
        res = run()
        tw.append(dict(iteration=0, objective=res.objective[0], surrogate_new=res.objective[0],
                       surrogate_old=res.objective[0], relative_descent=0.0, iterate_delta=0.0))
        for k, (rec, rep) in enumerate(zip(res.chain, res.reports), 1):
            tw.append(dict(iteration=k, objective=rec.v_new, surrogate_new=rec.s_new,
                           surrogate_old=rec.s_old, relative_descent=rep.relative_descent,
                           iterate_delta=rep.iterate_delta))
        return dict(iterations=res.iterations, messages=0, converged=res.converged,
                    final_objective=res.objective[-1],
                    final_merit=res.reports[-1].iterate_delta if res.reports else 0.0)
    return execute


#%% DRIVER

def prepare(cfg: RunConfig) -> Prepared:
    """Validate every parameter of ``cfg`` and bind the experiment."""
    pr = _Params(cfg, "problem", cfg.problem)
    a = _Params(cfg, "algorithm", cfg.algorithm)
    g = _Params(cfg, "graph", cfg.graph)
    b = _Params(cfg, "budget", cfg.budget)
    kind = pr.get("kind", kind=str, choices=tuple(KINDS))
    module = a.get("module", KINDS[kind], kind=str, choices=("flexa", "sonata", "mm"))
    if module != KINDS[kind]:
        raise cfg.error("algorithm", "module",
                        f"module: problem kind {kind} runs with {KINDS[kind]}, not {module}")
    if kind == "lasso":
        run, build = _prepare_lasso(cfg, pr, a, b)
        execute, cols = _flexa_execute(run, build, kind), _FLEXA_COLS
    elif kind == "logreg":
        run, build = _prepare_logreg(cfg, pr, a, b)
        execute, cols = _flexa_execute(run, build, kind), _FLEXA_COLS
    elif kind == "huber":
        execute, cols = _prepare_huber(cfg, pr, a, g, b), _SONATA_COLS
    elif kind == "localization":
        execute, cols = _prepare_localization(cfg, pr, a, g, b), _SONATA_COLS
    else:
        execute, cols = _prepare_mm(cfg, pr, a, b, kind), _MM_COLS
    for p in (pr, a, g, b):
        p.finish()
    if module != "sonata" and cfg.graph:
        raise cfg.error("graph", None, f"[graph] has no meaning for module {module}")
    return Prepared(cfg, cols, execute)


def run_experiment(cfg: RunConfig, output_dir: Optional[str] = None) -> Outcome:
    """
    Run a validated experiment, writing ``<name>.trace.csv`` and
    ``<name>.summary.txt`` into the output directory (argument, then the
    config's ``output_dir``, then ``$SCAOPT_OUTPUT_DIR``).
    """
    prep = prepare(cfg)
    out = output_dir or (cfg.resolve(cfg.output_dir) if cfg.output_dir else None) \
        or default_output_dir()
    os.makedirs(out, exist_ok=True)
    trace_path = os.path.join(out, f"{cfg.name}.trace.csv")
    summary_path = os.path.join(out, f"{cfg.name}.summary.txt")
    t0 = time.perf_counter()
    with TraceWriter(trace_path, prep.columns) as tw:
        summary = prep.execute(tw)
    items = dict(experiment=cfg.name, seed=cfg.seed, kind=cfg.problem["kind"])
    items.update(summary)
    items["trace_rows"] = tw.rows
    items["elapsed_seconds"] = round(time.perf_counter() - t0, 3)
    write_summary(summary_path, items)
    return Outcome(trace_path, summary_path, items)
