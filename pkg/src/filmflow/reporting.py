"""Deterministic CSV reports and pass/fail bookkeeping for campaigns."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import datetime, timezone


@dataclass
class CheckRecord:
    """One verified identity: resolution, measured gap, tolerance, verdict."""

    scenario: str
    check: str
    resolution: int
    gap: float
    tolerance: float

    @property
    def passed(self):
        return self.gap <= self.tolerance


def format_value(x):
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, bool):
        return "true" if x else "false"
    return str(x)


def write_csv(path, header, rows, seed=None, timestamp=True):
    """Write rows with repr-stable floats; identical inputs give identical
    bytes (the optional timestamp line is the only nondeterministic content)."""
    buf = io.StringIO()
    if timestamp:
        buf.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
    if seed is not None:
        buf.write(f"# rng=philox seed={seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(buf.getvalue())


def summary_rows(records):
    """Aggregate check records into summary lines: one per (scenario, check)
    family with pass/fail counts and the worst gap."""
    grouped = {}
    for rec in records:
        key = (rec.scenario, rec.check)
        entry = grouped.setdefault(key, {"pass": 0, "fail": 0, "max_gap": 0.0})
        entry["pass" if rec.passed else "fail"] += 1
        entry["max_gap"] = max(entry["max_gap"], rec.gap)
    rows = []
    for (scenario, check) in sorted(grouped):
        entry = grouped[(scenario, check)]
        rows.append([scenario, check, entry["pass"], entry["fail"],
                     entry["max_gap"]])
    return rows


SUMMARY_HEADER = ["scenario", "check", "pass", "fail", "max_gap"]
