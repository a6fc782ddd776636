"""Verification report records and their JSON / text / CSV emission."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

from .errors import ParablowError


class EmptyReport(ParablowError, ValueError):
    pass


@dataclass
class CheckRecord:
    """One verification check.

    ``measured`` and ``tolerance`` are the headline number and its bound;
    ``details`` carries secondary measurements; ``series`` holds the
    plot-ready rows written to ``<name>.csv`` with header ``columns``.
    A ``warning`` check never fails the report.
    """

    name: str
    criterion: int
    anchor: str
    measured: float
    tolerance: float
    passed: bool
    wall_time: float = 0.0
    warning: bool = False
    details: dict = field(default_factory=dict)
    columns: tuple = ()
    series: list = field(default_factory=list)

    @property
    def status(self):
        if self.passed:
            return "PASS"
        return "WARN" if self.warning else "FAIL"

    def to_json(self):
        return {
            "name": self.name,
            "criterion": self.criterion,
            "anchor": self.anchor,
            "measured": _jsonable(self.measured),
            "tolerance": _jsonable(self.tolerance),
            "passed": bool(self.passed),
            "status": self.status,
            "warning": bool(self.warning),
            "details": _jsonable(self.details),
            "wall_time": self.wall_time,
        }


@dataclass
class VerificationReport:
    suite: str
    checks: list = field(default_factory=list)

    @property
    def overall(self):
        return all(c.passed or c.warning for c in self.checks)

    def add(self, record):
        if any(c.name == record.name for c in self.checks):
            raise ValueError(f"check {record.name!r} recorded twice")
        self.checks.append(record)

    def to_json(self):
        checks = sorted(self.checks, key=lambda c: (c.criterion, c.name))
        return {"suite": self.suite, "overall": "PASS" if self.overall else "FAIL", "checks": [c.to_json() for c in checks]}


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def _fmt(v):
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, (int, float)):
        return f"{v:.4g}"
    return str(v)


def render_text(data):
    """Aligned plain-text table for a report dict (as produced by ``to_json``)."""
    rows = [("#", "check", "measured", "tolerance", "status", "anchor")]
    for c in data["checks"]:
        rows.append((str(c["criterion"]), c["name"], _fmt(c["measured"]), _fmt(c["tolerance"]), c["status"], c["anchor"]))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]) - 1)]
    lines = [f"suite: {data['suite']}    overall: {data['overall']}", ""]
    for r in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)) + "  " + r[-1])
    return "\n".join(lines) + "\n"


def emit_report(report, out_dir):
    """Write ``report.json``, ``report.txt`` and one ``<check>.csv`` per check.
    Returns the list of written paths."""
    if not report.checks:
        raise EmptyReport("at least one check is required")
    os.makedirs(out_dir, exist_ok=True)
    data = report.to_json()
    written = []
    path = os.path.join(out_dir, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    written.append(path)
    path = os.path.join(out_dir, "report.txt")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_text(data))
    written.append(path)
    for c in sorted(report.checks, key=lambda c: (c.criterion, c.name)):
        path = os.path.join(out_dir, f"{c.name}.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(c.columns or ("value",))
            for row in c.series:
                w.writerow([_cell(v) for v in row])
        written.append(path)
    return written


def _cell(v):
    if isinstance(v, float) or hasattr(v, "dtype"):
        return repr(float(v))
    return v


def load_report(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
