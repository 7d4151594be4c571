"""
Command line entry point.

Exit codes: 0 success, 1 solver or acceptance failure, 2 configuration or
usage error, 3 solver contract violation (the message names the invariant).
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Dict, List, Optional

import numpy as np

from ..errors import ConfigurationError, ContractViolation, ScaoptError
from ..network import GraphSequence, write_edge_list
from ..problems import (generate_huber, generate_lasso, generate_localization,
                        generate_logreg, write_matrix_csv)
from .config import ConfigError, load_config, parse_value
from .trace import default_output_dir, write_summary

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CONTRACT = 0, 1, 2, 3


def _kv(pairs: List[str]) -> Dict[str, object]:
    out = {}
    for p in pairs:
        if "=" not in p:
            raise ConfigurationError(f"expected key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = parse_value(v)
    return out


def _take(params, key, default, cast):
    v = params.pop(key, default)
    try:
        return cast(v)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{key}: cannot interpret {v!r}") from exc


def _done(params):
    if params:
        raise ConfigurationError(f"unknown parameters: {', '.join(sorted(params))}")


#%% SUBCOMMANDS

def cmd_run(args) -> int:
    from .experiments import run_experiment
    cfg = load_config(args.config)
    out = run_experiment(cfg, args.output_dir)
    for k, v in out.summary.items():
        print(f"{k} = {v}")
    print(f"trace = {out.trace_path}")
    return EXIT_OK


def cmd_check(args) -> int:
    from .acceptance import run_battery
    only = None if not args.only else [int(v) for v in args.only.split(",")]
    results = run_battery(only=only, include_slow=not args.fast)
    return EXIT_OK if all(r.passed or not r.gating for r in results) else EXIT_FAIL


def _gen_lasso(p, out):
    inst = generate_lasso(_take(p, "m", 1000, int), _take(p, "q", 500, int),
                          _take(p, "sparsity", 0.01, float), seed=_take(p, "seed", 0, int),
                          lam=_take(p, "lam", 1.0, float))
    _done(p)
    write_matrix_csv(os.path.join(out, "A.csv"), inst.A)
    write_matrix_csv(os.path.join(out, "z.csv"), inst.z[:, None])
    write_matrix_csv(os.path.join(out, "x_star.csv"), inst.x_star[:, None])
    return dict(kind="lasso", lam=inst.lam, v_star=inst.v_star)


def _gen_logreg(p, out):
    inst = generate_logreg(_take(p, "q", 400, int), _take(p, "m", 200, int),
                           seed=_take(p, "seed", 0, int), lam=_take(p, "lam", 0.01, float),
                           sparsity_fraction=_take(p, "sparsity", 0.1, float),
                           noise=_take(p, "noise", 0.1, float))
    _done(p)
    write_matrix_csv(os.path.join(out, "Z.csv"), inst.Z)
    write_matrix_csv(os.path.join(out, "w.csv"), inst.w[:, None])
    return dict(kind="logreg", lam=inst.lam)


def _gen_huber(p, out):
    inst = generate_huber(_take(p, "agents", 10, int), _take(p, "m", 20, int),
                          _take(p, "n_i", 10, int), _take(p, "sigma", 0.1, float),
                          seed=_take(p, "seed", 0, int),
                          outlier_scale=_take(p, "outlier_scale", 5.0, float))
    _done(p)
    write_matrix_csv(os.path.join(out, "B.csv"), np.vstack(inst.B))
    write_matrix_csv(os.path.join(out, "d.csv"), np.concatenate(inst.d)[:, None])
    write_matrix_csv(os.path.join(out, "x_true.csv"), inst.x_true[:, None])
    return dict(kind="huber", agents=inst.I, alpha=inst.alpha)


def _gen_localization(p, out):
    inst = generate_localization(_take(p, "agents", 10, int), _take(p, "targets", 2, int),
                                 seed=_take(p, "seed", 0, int),
                                 noise=_take(p, "noise", 0.0, float))
    _done(p)
    for name, M in (("sensors", inst.sensors), ("d", inst.d), ("p", inst.p),
                    ("targets", inst.targets)):
        write_matrix_csv(os.path.join(out, f"{name}.csv"), M)
    return dict(kind="localization", agents=inst.I, targets=inst.n)


_GENERATORS = {"lasso": _gen_lasso, "logreg": _gen_logreg, "huber": _gen_huber,
               "localization": _gen_localization}


def cmd_gen(args) -> int:
    params = _kv(args.params)
    out = args.output_dir or default_output_dir()
    os.makedirs(out, exist_ok=True)
    meta = _GENERATORS[args.problem](params, out)
    write_summary(os.path.join(out, "instance.txt"), meta)
    print(f"wrote {args.problem} instance to {out}")
    return EXIT_OK


def cmd_graph(args) -> int:
    p = _kv(args.params)
    I = _take(p, "nodes", 10, int)
    seed = _take(p, "seed", 0, int)
    steps = _take(p, "steps", 100, int)
    sym = _take(p, "symmetric", False, bool)
    _done(p)
    if steps < 1:
        raise ConfigurationError("steps must be at least 1")
    seq = GraphSequence("permuted_ring_plus_random", I, seed=seed, symmetric=sym)
    path = args.output or os.path.join(default_output_dir(), "graph.edges")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    write_edge_list(path, [seq.step(k) for k in range(steps)])
    print(f"wrote {steps} graph steps over {I} nodes to {path}")
    return EXIT_OK


#%% MAIN

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scaopt", description=(
        "Run SCA/MM experiments, the acceptance battery, and instance generators. "
        "Output goes to --output-dir, else $SCAOPT_OUTPUT_DIR, else ./scaopt-out."))
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    r.add_argument("--output-dir")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("check", help="run the acceptance battery")
    c.add_argument("--only", help="comma-separated criterion numbers")
    c.add_argument("--fast", action="store_true", help="skip the slowest criteria")
    c.set_defaults(func=cmd_check)
    g = sub.add_parser("gen", help="write a problem instance as CSV matrices")
    g.add_argument("problem", choices=sorted(_GENERATORS))
    g.add_argument("params", nargs="*", help="key=value generator parameters")
    g.add_argument("--output-dir")
    g.set_defaults(func=cmd_gen)
    e = sub.add_parser("graph", help="write a time-varying digraph as an edge list")
    e.add_argument("params", nargs="*", help="nodes=, seed=, steps=, symmetric=")
    e.add_argument("--output", help="edge-list path")
    e.set_defaults(func=cmd_graph)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractViolation as exc:
        print(f"contract violation [{exc.invariant}]: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except ScaoptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
