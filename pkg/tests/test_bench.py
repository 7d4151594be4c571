import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from scaopt.bench.cli import main
from scaopt.bench.config import ConfigError, parse_config, parse_value
from scaopt.bench.experiments import run_experiment
from scaopt.bench.oracles import oracle_grid_local_minima, oracle_gridmin, oracle_proxgrad
from scaopt.bench.trace import (ENV_OUTPUT_DIR, TraceWriter, default_output_dir, read_summary,
                                read_trace)
from scaopt.core import CompositeProblem
from scaopt.errors import ConfigurationError, ContractViolation
from scaopt.network import read_edge_list
from scaopt.problems import LassoInstance, generate_lasso, read_matrix_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """\
[experiment]
name = t
[problem]
kind = sparse_ls
q = 20
m = 30
[algorithm]
module = mm
"""


# config parsing

def test_parse_value_types():
    assert parse_value("12") == 12 and isinstance(parse_value("12"), int)
    assert parse_value("1e-3") == 1e-3
    assert parse_value("TRUE") is True and parse_value("off") is False
    assert parse_value(" push_sum ") == "push_sum"


def test_parse_minimal_config():
    cfg = parse_config("# header\n" + MINIMAL.replace("m = 30", "m = 30   # columns"))
    assert cfg.name == "t" and cfg.seed == 0 and cfg.output_dir is None
    assert cfg.problem == {"kind": "sparse_ls", "q": 20, "m": 30}
    assert cfg.lines[("problem", "m")] == 7


@pytest.mark.parametrize("text,line,needle", [
    ("[experiment]\nname = a\n[bogus]\n", 3, "unknown section"),
    ("x = 1\n", 1, "before any section"),
    ("[experiment]\nname a\n", 2, "expected"),
    ("[experiment]\nseed = 1\nseed = 2\n", 3, "duplicate key"),
    ("[experiment]\n[experiment]\n", 2, "duplicate section"),
    ("[experiment]\nseed =\n", 2, "missing value"),
    ("[experiment]\nseed == 3\n", 2, "malformed"),
    ("[experiment]\nseed = -1\n[problem]\n[algorithm]\n", 2, "seed"),
    ("[experiment]\ncolour = red\n[problem]\n[algorithm]\n", 2, "unknown key"),
])
def test_config_errors_carry_line_numbers(text, line, needle):
    with pytest.raises(ConfigError) as e:
        parse_config(text, "x.cfg")
    assert e.value.line == line
    assert needle in str(e.value)
    assert str(e.value).startswith(f"x.cfg:{line}:")


def test_config_missing_section():
    with pytest.raises(ConfigError) as e:
        parse_config("[experiment]\nname = a\n[problem]\nkind = lasso\n")
    assert "algorithm" in str(e.value)


def test_semantic_errors_point_at_line(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text(MINIMAL.replace("q = 20", "q = 0"))
    with pytest.raises(ConfigError) as e:
        run_experiment(parse_config(p.read_text(), str(p)), str(tmp_path))
    assert e.value.line == 5
    p.write_text(MINIMAL + "frobnicate = 3\n")
    with pytest.raises(ConfigError) as e:
        run_experiment(parse_config(p.read_text(), str(p)), str(tmp_path))
    assert e.value.line == 9


# traces

def test_trace_roundtrip(tmp_path):
    p = tmp_path / "t.csv"
    with TraceWriter(str(p), ["iteration", "value"]) as tw:
        for k in range(5):
            tw.append({"iteration": k, "value": 0.1 * k + 1e-17})
    assert p.read_text().splitlines()[0] == "#schema=1"
    tr = read_trace(str(p))
    assert tr.columns == ["iteration", "value"] and len(tr) == 5
    assert np.array_equal(tr.column("value"), [0.1 * k + 1e-17 for k in range(5)])


@pytest.mark.parametrize("rows,invariant", [
    ([{"iteration": 0, "value": float("nan")}], "trace-finite"),
    ([{"iteration": 0, "value": 1.0}, {"iteration": 0, "value": 2.0}], "trace-monotone"),
    ([{"iteration": 0}], "trace-schema"),
])
def test_trace_contracts(tmp_path, rows, invariant):
    with TraceWriter(str(tmp_path / "t.csv"), ["iteration", "value"]) as tw:
        with pytest.raises(ContractViolation) as e:
            for r in rows:
                tw.append(r)
    assert e.value.invariant == invariant


def test_trace_schema_checked(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("#schema=99\na\n1\n")
    with pytest.raises(ConfigurationError):
        read_trace(str(p))


def test_output_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv(ENV_OUTPUT_DIR, str(tmp_path / "env"))
    assert default_output_dir() == str(tmp_path / "env")
    monkeypatch.delenv(ENV_OUTPUT_DIR)
    assert default_output_dir().endswith("scaopt-out")


# oracles

def test_gridmin_examples():
    assert oracle_gridmin(lambda x: (x - 1) ** 2, (-3, 3), 1e-4) == pytest.approx(1.0, abs=1e-4)
    f = lambda u: 0.5 * (u - 2) ** 2 + abs(u)
    assert oracle_gridmin(f, (-3, 3), 1e-4) == pytest.approx(1.0, abs=1e-4)
    g = lambda p: (p[0] - 0.3) ** 2 + 2 * (p[1] + 0.7) ** 2
    assert np.allclose(oracle_gridmin(g, [(-1, 1), (-1, 1)], 1e-6), [0.3, -0.7], atol=1e-6)


def test_grid_local_minima_toy():
    f = lambda x: (1 - (x - 1) ** 2) ** 2
    found = oracle_grid_local_minima(f, (-1, 3), 1e-6, vectorized=True)
    assert np.allclose(sorted(found), [0.0, 2.0], atol=1e-6)


def test_gridmin_validation():
    with pytest.raises(ConfigurationError):
        oracle_gridmin(lambda x: x, (0, 1), 0.0)


def test_proxgrad_one_step_for_exact_quadratic():
    c = np.array([1.0, -2.0, 0.5])
    prob = CompositeProblem(3, lambda x: 0.5 * float((x - c) @ (x - c)), lambda x: x - c,
                            lipschitz_hint=1.0)
    x, v = oracle_proxgrad(prob, tol=1e-12)
    assert np.array_equal(x, c) and v == 0.0


def test_proxgrad_huge_lambda_gives_zero():
    rng = np.random.default_rng(0)
    inst = LassoInstance(rng.standard_normal((15, 20)), rng.standard_normal(15), 1e6)
    x, _ = oracle_proxgrad(inst.composite())
    assert np.array_equal(x, np.zeros(20))


def test_proxgrad_matches_certificate():
    tol = 1e-10
    inst = generate_lasso(50, 40, 0.1, seed=7)
    x, v = oracle_proxgrad(inst.composite(), tol=tol)
    assert np.max(np.abs(x - inst.x_star)) <= 10 * tol


# CLI

def _write(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_run_lasso_certificate(tmp_path, capsys):
    assert main(["run", str(CONFIGS / "lasso-flexa.cfg"), "--output-dir", str(tmp_path)]) == 0
    s = read_summary(str(tmp_path / "lasso-flexa.summary.txt"))
    assert float(s["re"]) <= 1e-6
    tr = read_trace(str(tmp_path / "lasso-flexa.trace.csv"))
    assert tr.columns[0] == "iteration" and len(tr) == int(s["trace_rows"])


def test_cli_run_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = str(CONFIGS / "sonata-huber.cfg")
    assert main(["run", cfg, "--output-dir", str(a)]) == 0
    assert main(["run", cfg, "--output-dir", str(b)]) == 0
    name = "sonata-huber.trace.csv"
    assert (a / name).read_bytes() == (b / name).read_bytes()


@pytest.mark.parametrize("cfg", ["sparse-ls-mm.cfg"])
def test_cli_run_mm(tmp_path, cfg):
    assert main(["run", str(CONFIGS / cfg), "--output-dir", str(tmp_path)]) == 0
    tr = read_trace(str(tmp_path / cfg.replace(".cfg", ".trace.csv")))
    assert np.all(np.diff(tr.column("objective")) <= 1e-10 * tr.column("objective")[0])


def test_cli_malformed_config_exit_2(tmp_path, capsys):
    p = _write(tmp_path, "[experiment]\nname = x\nseed == 4\n")
    assert main(["run", p]) == 2
    err = capsys.readouterr().err
    assert f"{p}:3:" in err


def test_cli_missing_file_exit_2(tmp_path):
    assert main(["run", str(tmp_path / "nope.cfg")]) == 2


def test_cli_output_dir_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_OUTPUT_DIR, str(tmp_path / "env"))
    p = _write(tmp_path, MINIMAL)
    assert main(["run", p]) == 0
    assert (tmp_path / "env" / "t.trace.csv").exists()
    q = _write(tmp_path, MINIMAL.replace("name = t", f"name = t\noutput_dir = {tmp_path / 'cfg'}"),
               "d.cfg")
    assert main(["run", q]) == 0
    assert (tmp_path / "cfg" / "t.trace.csv").exists()
    assert main(["run", q, "--output-dir", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "t.trace.csv").exists()


def test_cli_gen_and_graph(tmp_path):
    out = tmp_path / "inst"
    assert main(["gen", "lasso", "m=30", "q=20", "sparsity=0.1", "--output-dir", str(out)]) == 0
    A = read_matrix_csv(out / "A.csv")
    assert A.shape == (20, 30)
    assert read_summary(str(out / "instance.txt"))["kind"] == "lasso"
    assert main(["gen", "lasso", "bogus=1", "--output-dir", str(out)]) == 2
    g = tmp_path / "g.edges"
    assert main(["graph", "nodes=6", "steps=3", "seed=1", "--output", str(g)]) == 0
    steps = read_edge_list(g)
    assert len(steps) == 3 and steps[0].I == 6


def test_cli_file_based_lasso(tmp_path):
    out = tmp_path / "inst"
    assert main(["gen", "lasso", "m=40", "q=30", "sparsity=0.1", "--output-dir", str(out)]) == 0
    v_star = read_summary(str(out / "instance.txt"))["v_star"]
    p = _write(tmp_path, f"""[experiment]
name = f
[problem]
kind = lasso
a_file = inst/A.csv
z_file = inst/z.csv
lam = 1.0
v_star = {v_star}
[algorithm]
module = flexa
[budget]
tol = 1e-6
""")
    assert main(["run", p, "--output-dir", str(tmp_path / "o")]) == 0
    assert float(read_summary(str(tmp_path / "o" / "f.summary.txt"))["re"]) <= 1e-6


def test_cli_check_subset(capsys):
    assert main(["check", "--only", "2,10"]) == 0
    out = capsys.readouterr().out
    assert "criterion  2 PASS" in out and "criterion 10 PASS" in out


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "scaopt.bench", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "run" in out.stdout
