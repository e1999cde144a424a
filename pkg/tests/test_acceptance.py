"""Acceptance criteria A1-A8 at their stated scales.

Each test prints one PASS/FAIL line for its criterion (followed by the
sub-check lines); all lines are repeated in the terminal summary.
"""

import pytest

from chicrit.acceptance import (
    SEED,
    check_a1,
    check_a2,
    check_a3,
    check_a4,
    check_a5,
    check_a6,
    check_a7,
    check_a8,
)


def report(log, criterion, results):
    ok = all(r.passed for r in results)
    failed = [r.name for r in results if not r.passed]
    head = f"{'PASS' if ok else 'FAIL'}  {criterion}" + ("" if ok else f"  (failed: {', '.join(failed)})")
    lines = [head] + [f"      {r.line()}" for r in results]
    log.extend(lines)
    print("\n".join(lines))
    return ok, "\n".join(lines)


def test_a1_chi_moment_constant(acceptance_log):
    ok, text = report(acceptance_log, "A1 chi-moment constant", check_a1(seed=SEED))
    assert ok, text


def test_a2_a1_closed_form(acceptance_log):
    ok, text = report(acceptance_log, "A2 A1 closed form", check_a2(seed=SEED))
    assert ok, text


def test_a3_mainbody_ratio(acceptance_log):
    ok, text = report(acceptance_log, "A3 D/A1 ratio and A2 decay", check_a3(seed=SEED))
    assert ok, text


@pytest.mark.slow
def test_a4_maxima_end_to_end(acceptance_log):
    ok, text = report(acceptance_log, "A4 maxima of f_2 on S^2", check_a4(seed=SEED))
    assert ok, text


def test_a5_hessian_oracle(acceptance_log):
    ok, text = report(acceptance_log, "A5 Hessian covariance oracle", check_a5(seed=SEED))
    assert ok, text


@pytest.mark.slow
def test_a6_critical_points(acceptance_log):
    ok, text = report(acceptance_log, "A6 critical points of f_4", check_a6(seed=SEED))
    assert ok, text


@pytest.mark.slow
def test_a7_euler_characteristic(acceptance_log):
    ok, text = report(acceptance_log, "A7 Euler-characteristic chain", check_a7(seed=SEED))
    assert ok, text


def test_a8_invariants(acceptance_log):
    ok, text = report(acceptance_log, "A8 invariant suite", check_a8(seed=SEED))
    assert ok, text
