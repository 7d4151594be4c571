"""
Acceptance battery, one test per criterion.

Each test prints a single pass/fail line. Criterion 8 is a strict xfail:
its tolerance is out of reach for the stated perturbation (see the decisions
ledger). Criterion 11 is recorded only and never gates.
"""

import pytest

from scaopt.bench.acceptance import CRITERIA, SLOW

GATING = [k for k in range(1, 13) if k not in (8, 11)]


def _run(k):
    result = CRITERIA[k]()
    print(result.line())
    return result


@pytest.mark.parametrize("k", [pytest.param(k, marks=pytest.mark.slow) if k in SLOW else k
                               for k in GATING])
def test_criterion(k):
    result = _run(k)
    assert result.passed, result.line()


@pytest.mark.xfail(strict=True, reason="tracking error decays like C/k^2 with C about 5; "
                                        "1e-6 at k=500 is unreachable for unit-normal d")
def test_criterion_8():
    result = _run(8)
    assert result.passed, result.line()


@pytest.mark.slow
def test_criterion_11_recorded():
    result = _run(11)
    assert not result.gating
    assert "T_eps" in result.detail
