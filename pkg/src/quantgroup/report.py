"""Metric reports.

A report is a list of metric rows ``(check, group, level, metric, value,
tolerance, pass)`` plus metadata and calibration constants. Rows without a
tolerance are informational and always pass.
"""

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

COLUMNS = ("check", "group", "level", "metric", "value", "tolerance", "pass")


@dataclass
class MetricRow:
    check: str
    group: str
    level: int
    metric: str
    value: float
    tolerance: float | None = None

    @property
    def passed(self) -> bool:
        if self.tolerance is None:
            return True
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)

    def cells(self) -> list:
        tol = "" if self.tolerance is None else _fmt(self.tolerance)
        return [self.check, self.group, str(self.level), self.metric, _fmt(self.value), tol,
                "true" if self.passed else "false"]


def _fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


@dataclass
class Report:
    """Collected metric rows of one or more checks."""

    rows: list = field(default_factory=list)
    calibration: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def add(self, check, group, level, metric, value, tolerance=None) -> MetricRow:
        row = MetricRow(check, group, int(level), metric, float(value),
                        None if tolerance is None else float(tolerance))
        self.rows.append(row)
        return row

    def extend(self, other: "Report"):
        self.rows.extend(other.rows)
        for key, val in other.calibration.items():
            self.calibration[key] = val

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failures(self) -> list:
        return [r for r in self.rows if not r.passed]

    def values(self, metric: str, check: str | None = None) -> list:
        return [r.value for r in self.rows if r.metric == metric and (check is None or r.check == check)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in self.rows:
            writer.writerow(row.cells())
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "metadata": self.metadata,
            "calibration": self.calibration,
            "rows": [dict(zip(COLUMNS, r.cells())) for r in self.rows],
            "passed": self.passed,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def write(self, path: str, fmt: str = "csv"):
        text = self.to_csv() if fmt == "csv" else self.to_json()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def metadata(config_hash: str, timestamp: str | None = None) -> dict:
    """Run metadata: configuration hash and library versions."""
    meta = {
        "config_hash": config_hash,
        "quantgroup": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    try:
        import finufft

        meta["finufft"] = getattr(finufft, "__version__", "unknown")
    except ImportError:
        meta["finufft"] = "absent"
    if timestamp is not None:
        meta["timestamp"] = timestamp
    return meta
