"""Acceptance criteria 1-9, each at its stated tolerance and runtime limit.

A pass/fail line per criterion is printed in the terminal summary.
"""

import subprocess
import sys
import time

import pytest

from gks_whitham import validation

OUTCOMES = {}

CHECKS = {c.number: c for c in validation.CRITERIA}


def record(number, name, passed, detail):
    OUTCOMES[number] = (name, passed, detail)
    print(f"criterion {number} {name}: {'PASS' if passed else 'FAIL'} {detail}")


@pytest.mark.parametrize("number", sorted(CHECKS))
def test_criterion(number):
    res = CHECKS[number]()
    detail = f"({res.elapsed:.1f} s of {res.time_limit:.0f} s) " + ", ".join(
        f"{k}={validation._fmt(v)}" for k, v in res.measured.items()
    )
    record(number, res.name, res.ok, detail)
    assert res.passed, f"criterion {number} outside tolerance: {res.measured}"
    assert res.in_time, f"criterion {number} took {res.elapsed:.1f} s (limit {res.time_limit} s)"


def test_criterion_9_determinism(tmp_path):
    t0 = time.perf_counter()
    reports = []
    for j in range(2):
        out = tmp_path / f"report{j}.txt"
        proc = subprocess.run(
            [sys.executable, "-m", "gks_whitham.cli", "validate", "--out", str(out)],
            capture_output=True,
        )
        assert proc.returncode == 0, proc.stderr.decode()
        reports.append((out.read_bytes(), proc.stdout))
    same = reports[0] == reports[1]
    record(9, "determinism", same, f"({time.perf_counter() - t0:.1f} s) {len(reports[0][0])} bytes per report")
    assert same
