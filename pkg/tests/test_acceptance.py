"""Acceptance criteria 1-13 at the refined tier.

The whole suite runs once per session (a few minutes); each criterion is then
its own test, and a one-line PASS/WARN/FAIL summary per criterion is printed.
"""

import pytest

from parablow.report import emit_report
from parablow.verification import CRITERIA, run_suite


@pytest.fixture(scope="module")
def full_report(tmp_path_factory):
    report = run_suite("full", seed=0)
    emit_report(report, tmp_path_factory.mktemp("acceptance"))
    return report


def _line(c):
    return f"criterion {c.criterion:2d} {c.name:22s} {c.status:4s} measured={c.measured:.4g} tolerance={c.tolerance:.4g}"


@pytest.mark.parametrize("name", list(CRITERIA), ids=[f"{i:02d}-{n}" for n, i in CRITERIA.items()])
def test_criterion(full_report, name, capsys):
    rec = next(c for c in full_report.checks if c.name == name)
    with capsys.disabled():
        print("\n" + _line(rec))
    # only the derivative diagnostic may downgrade a miss to a warning
    assert rec.passed or (rec.warning and name == "derivative_bound"), rec.details


def test_report_is_complete(full_report):
    assert sorted(c.criterion for c in full_report.checks) == list(range(1, 14))
    assert full_report.overall
