"""Run reports: JSON with a schema version, CSV curves, and a timing sidecar.

``report.json`` holds only quantities that are functions of the config, so
two runs of the same config produce identical files.  Wall-clock time goes
to ``timing.json`` next to it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .paths import write_curve_csv

SCHEMA_VERSION = 1


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


@dataclass
class Check:
    """A pass/fail verdict with the tolerance that produced it."""

    name: str
    value: float
    tolerance: float
    passed: bool
    rule: str = "value <= tolerance"

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance, "rule": self.rule, "passed": self.passed}


@dataclass
class RunReport:
    config: dict
    results: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def add(self, name: str, data) -> None:
        if hasattr(data, "to_dict"):
            data = data.to_dict()
        self.results.append({"name": name, "data": data})

    def check(self, name: str, value: float, tolerance: float, rule: str = "value <= tolerance", passed: bool | None = None) -> Check:
        if passed is None:
            passed = bool(value <= tolerance)
        c = Check(name, float(value), float(tolerance), bool(passed), rule)
        self.checks.append(c)
        return c

    def curve(self, name: str, xs, ys, header=("s", "value")) -> None:
        self.curves[name] = (header, np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return _clean(
            {
                "schema_version": SCHEMA_VERSION,
                "config": self.config,
                "results": self.results,
                "checks": [c.to_dict() for c in self.checks],
                "curves": sorted(f"{n}.csv" for n in self.curves),
                "passed": self.passed,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def emit_report(report: RunReport, directory) -> list:
    """Write ``report.json``, one CSV per curve and ``timing.json``."""
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
        written = [d / "report.json"]
        written[0].write_text(report.to_json())
        for name, (header, xs, ys) in sorted(report.curves.items()):
            p = d / f"{name}.csv"
            write_curve_csv(xs, ys, p, header)
            written.append(p)
        t = d / "timing.json"
        t.write_text(json.dumps({"wall_clock_seconds": report.wall_clock}) + "\n")
        written.append(t)
    except OSError as exc:
        raise OSError(f"cannot write report to {d}: {exc}") from exc
    return written
