"""Verified-inequality reports and their JSON/CSV serialization."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field


@dataclass
class EstimateReport:
    """Outcome of one verified inequality instance.

    ``lhs`` and ``rhs`` are the two sides as computed by quadrature,
    ``ratio`` is lhs/rhs (0 when both sides vanish), ``tolerance`` is the
    bound the ratio is held against and ``passed`` the verdict.  ``meta``
    carries instance identifiers plus the separately-recorded quadrature
    defect, so a discretization artefact can never masquerade as an
    inequality failure.
    """

    name: str
    lhs: float
    rhs: float
    ratio: float
    tolerance: float
    passed: bool
    meta: dict = field(default_factory=dict)

    @staticmethod
    def from_sides(name, lhs, rhs, tolerance, meta=None):
        lhs = float(lhs)
        rhs = float(rhs)
        if lhs == 0.0 and rhs == 0.0:
            ratio = 0.0
        elif rhs == 0.0:
            ratio = float("inf")
        else:
            ratio = lhs / rhs
        return EstimateReport(
            name=name,
            lhs=lhs,
            rhs=rhs,
            ratio=ratio,
            tolerance=float(tolerance),
            passed=bool(ratio <= tolerance),
            meta=dict(meta or {}),
        )

    def to_dict(self):
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "meta": self.meta,
        }

    def to_json(self, **kwargs):
        kwargs.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kwargs)


def write_reports_json(reports, path):
    """Write a list of EstimateReports (or plain dicts) as one JSON document."""
    payload = [r.to_dict() if isinstance(r, EstimateReport) else r for r in reports]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_ratio_table_csv(reports, path):
    """Flat CSV of (name, lhs, rhs, ratio, tolerance, pass) rows for plotting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "lhs", "rhs", "ratio", "tolerance", "pass"])
        for r in reports:
            d = r.to_dict() if isinstance(r, EstimateReport) else r
            writer.writerow(
                [d["name"], repr(d["lhs"]), repr(d["rhs"]), repr(d["ratio"]),
                 repr(d["tolerance"]), int(d["pass"])]
            )
