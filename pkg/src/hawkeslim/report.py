"""Experiment reports and tabular/JSON serialization helpers.

Every experiment produces an ExperimentReport: the echoed inputs, per-run
results, and a list of named checks where each pass/fail flag sits next to
the numeric comparison that produced it.  JSON output is stable (sorted
keys, versioned schema); CSV output is RFC-4180 (comma separated, CRLF
line endings, header row, UTF-8) with floats rendered by ``repr`` so a
round-trip reproduces the exact bits.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

REPORT_SCHEMA = "hawkeslim.report.v1"
EVENTS_SCHEMA = "hawkeslim.events.v1"


@dataclass(frozen=True)
class Check:
    """One named pass/fail verdict with its numeric evidence."""

    name: str
    value: float
    threshold: float
    comparator: str  # "<=", "<", ">=", ">", "decreasing"
    passed: bool

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "value": _jsonable(self.value),
            "threshold": _jsonable(self.threshold),
            "comparator": self.comparator,
            "passed": bool(self.passed),
        }


def make_check(name: str, value: float, threshold: float, comparator: str) -> Check:
    ops = {
        "<=": lambda a, b: a <= b,
        "<": lambda a, b: a < b,
        ">=": lambda a, b: a >= b,
        ">": lambda a, b: a > b,
    }
    if comparator not in ops:
        raise ValueError(f"unknown comparator {comparator!r}")
    return Check(name, float(value), float(threshold), comparator,
                 bool(ops[comparator](value, threshold)))


@dataclass
class ExperimentReport:
    """Outcome of one experiment run."""

    kind: str
    inputs: dict
    results: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    wall_time_s: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA,
            "kind": self.kind,
            "inputs": _jsonable(self.inputs),
            "results": _jsonable(self.results),
            "checks": [c.as_dict() for c in self.checks],
            "passed": self.passed,
            "wall_time_s": self.wall_time_s,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def _jsonable(obj):
    """Recursively convert to JSON-safe values; non-finite floats become strings."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isfinite(f):
            return f
        return repr(f)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def write_csv(fileobj, header, rows) -> None:
    """RFC-4180 CSV: header row then data rows; floats via repr for exact
    round-trips."""
    w = csv.writer(fileobj, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(c) for c in row])


def _cell(c):
    import numpy as np

    if isinstance(c, (np.floating, float)):
        return repr(float(c))
    if isinstance(c, (np.integer, int)):
        return int(c)
    return c


def events_to_csv(fileobj, paths) -> None:
    """One row per jump: (replica, time).  Schema name: hawkeslim.events.v1."""
    rows = []
    for p in paths:
        for t in p.times:
            rows.append((p.replica, float(t)))
    write_csv(fileobj, ("replica", "time"), rows)


def gridpath_to_csv(fileobj, path) -> None:
    """Rows (t, value, derivative); derivative column empty when absent."""
    rows = []
    for i, t in enumerate(path.grid):
        d = "" if path.derivative is None else repr(float(path.derivative[i]))
        rows.append((float(t), float(path.values[i]), d))
    write_csv(fileobj, ("t", "value", "derivative"), rows)
