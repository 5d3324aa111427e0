"""Check records, suite reports and their JSON/CSV serialization."""

from __future__ import annotations

import csv
import io
import json
import math
import platform
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import __version__

REPORT_SCHEMA = "rflab-report/1"


def _num(x) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass(frozen=True)
class Record:
    """One comparison: passes iff ``margin >= -tol``.

    ``margin`` is oriented so that positive means the inequality holds with
    room to spare; equality checks use ``margin = -|lhs - rhs|``.
    """

    name: str
    lhs: float
    rhs: float
    margin: float
    tol: float
    constants: str = ""
    criterion: int | None = None

    @property
    def passed(self) -> bool:
        return bool(math.isfinite(self.margin) and self.margin >= -self.tol)

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": _num(self.lhs), "rhs": _num(self.rhs), "margin": _num(self.margin),
                "tol": _num(self.tol), "passed": self.passed, "constants": self.constants,
                "criterion": self.criterion}


def leq(name, lhs, rhs, tol=0.0, constants="", criterion=None) -> Record:
    """``lhs <= rhs``."""
    return Record(name, float(lhs), float(rhs), float(rhs) - float(lhs), float(tol), constants, criterion)


def geq(name, lhs, rhs, tol=0.0, constants="", criterion=None) -> Record:
    """``lhs >= rhs``."""
    return Record(name, float(lhs), float(rhs), float(lhs) - float(rhs), float(tol), constants, criterion)


def close(name, lhs, rhs, tol, constants="", criterion=None, relative=False) -> Record:
    """``|lhs - rhs| <= tol`` (relative to ``|rhs|`` when ``relative``)."""
    err = abs(float(lhs) - float(rhs))
    if relative:
        err /= max(abs(float(rhs)), 1e-300)
    return Record(name, float(lhs), float(rhs), -err, float(tol), constants, criterion)


def flag(name, ok: bool, detail: float = 0.0, constants="", criterion=None) -> Record:
    """A yes/no property; ``detail`` is reported as ``lhs``."""
    return Record(name, float(detail), 0.0, 0.0 if ok else -math.inf, 0.0, constants, criterion)


@dataclass
class CheckResult:
    records: list[Record] = field(default_factory=list)
    series: dict[str, tuple[list[float], list[float]]] = field(default_factory=dict)
    notes: list[dict] = field(default_factory=list)


@dataclass
class SuiteReport:
    suite: str
    records: list[Record]
    series: dict[str, tuple[list[float], list[float]]]
    notes: list[dict]
    runtimes: dict[str, float]
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(r.passed for r in self.records)

    def to_dict(self) -> dict:
        return {"suite": self.suite, "passed": self.passed, "error": self.error,
                "records": [r.to_dict() for r in self.records], "notes": self.notes}

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "lhs", "rhs", "margin", "tol", "passed", "criterion", "constants"])
        for r in self.records:
            w.writerow([r.name, repr(r.lhs), repr(r.rhs), repr(r.margin), repr(r.tol), r.passed,
                        "" if r.criterion is None else r.criterion, r.constants])
        return buf.getvalue()


def environment_stamp() -> dict:
    return {"rflab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "platform": platform.system()}


def report_document(reports: list[SuiteReport], config: dict, config_hash: str, timestamp: str) -> dict:
    ordered = sorted(reports, key=lambda r: r.suite)
    return {"schema": REPORT_SCHEMA, "config_hash": config_hash, "timestamp": timestamp,
            "environment": environment_stamp(), "config": config,
            "passed": all(r.passed for r in ordered), "suites": [r.to_dict() for r in ordered]}


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def diff_reports(a: dict, b: dict, tol: float = 0.0) -> list[str]:
    """Human-readable differences between two report documents (timestamps ignored)."""
    out = []
    for key in ("schema", "config_hash"):
        if a.get(key) != b.get(key):
            out.append(f"{key}: {a.get(key)} -> {b.get(key)}")
    ra = {(s["suite"], r["name"]): r for s in a.get("suites", []) for r in s["records"]}
    rb = {(s["suite"], r["name"]): r for s in b.get("suites", []) for r in s["records"]}
    for k in sorted(set(ra) | set(rb)):
        if k not in ra:
            out.append(f"added {k[0]}/{k[1]}")
        elif k not in rb:
            out.append(f"removed {k[0]}/{k[1]}")
        else:
            x, y = ra[k], rb[k]
            if x["passed"] != y["passed"]:
                out.append(f"{k[0]}/{k[1]}: passed {x['passed']} -> {y['passed']}")
            mx, my = x["margin"], y["margin"]
            if mx is None or my is None:
                if mx != my:
                    out.append(f"{k[0]}/{k[1]}: margin {mx} -> {my}")
            elif abs(mx - my) > tol:
                out.append(f"{k[0]}/{k[1]}: margin {mx:.6g} -> {my:.6g}")
    return out
