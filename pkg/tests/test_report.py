import json
import os

import pytest

from parablow.report import CheckRecord, EmptyReport, VerificationReport, emit_report, load_report, render_text


def rec(name, crit, passed=True, warning=False, wall=0.1):
    return CheckRecord(
        name, crit, f"anchor {crit}", 0.5, 1.0, passed, wall_time=wall, warning=warning,
        columns=("x", "y"), series=[(1.0, 2.0), (3.0, 4.5)],
    )


def test_empty_report_rejected(tmp_path):
    with pytest.raises(EmptyReport):
        emit_report(VerificationReport("quick"), tmp_path)


def test_file_count_matches_checks(tmp_path):
    rep = VerificationReport("full")
    for i in range(1, 4):
        rep.add(rec(f"c{i}", i))
    written = emit_report(rep, tmp_path)
    assert len(written) == 2 + 3
    assert sorted(os.listdir(tmp_path)) == ["c1.csv", "c2.csv", "c3.csv", "report.json", "report.txt"]
    assert (tmp_path / "c1.csv").read_text() == "x,y\n1.0,2.0\n3.0,4.5\n"


def test_overall_status_and_warnings():
    rep = VerificationReport("quick")
    rep.add(rec("a", 1))
    rep.add(rec("b", 2, passed=False, warning=True))
    assert rep.overall and rep.checks[1].status == "WARN"
    rep.add(rec("c", 3, passed=False))
    assert not rep.overall
    with pytest.raises(ValueError):
        rep.add(rec("a", 1))


def test_deterministic_json_except_wall_time(tmp_path):
    outs = []
    for wall in (0.1, 9.9):
        rep = VerificationReport("quick")
        rep.add(rec("b", 2, wall=wall))
        rep.add(rec("a", 1, wall=wall))
        d = tmp_path / str(wall)
        emit_report(rep, d)
        outs.append(load_report(d / "report.json"))
    for data in outs:
        assert [c["name"] for c in data["checks"]] == ["a", "b"]
        for c in data["checks"]:
            c.pop("wall_time")
    assert json.dumps(outs[0], sort_keys=True) == json.dumps(outs[1], sort_keys=True)


def test_text_table_lists_anchor():
    rep = VerificationReport("quick")
    rep.add(rec("a", 1))
    text = render_text(rep.to_json())
    assert "anchor 1" in text and "PASS" in text and text.startswith("suite: quick")


def test_nonfinite_values_serialise(tmp_path):
    rep = VerificationReport("quick")
    r = rec("a", 1)
    r.measured = float("nan")
    rep.add(r)
    emit_report(rep, tmp_path)
    assert load_report(tmp_path / "report.json")["checks"][0]["measured"] == "nan"
