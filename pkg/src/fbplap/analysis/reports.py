"""Report containers and their JSON / CSV forms."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

TOOL = "fbplap"


def _version() -> str:
    from .. import __version__

    return __version__


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


@dataclass
class ScanReport:
    """Per-ball records plus aggregates; ``passed`` is None when nothing was asserted."""

    name: str
    records: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    passed: Optional[bool] = None
    failures: list = field(default_factory=list)

    def fail(self, msg: str) -> None:
        self.failures.append(msg)
        self.passed = False

    def to_dict(self, problem_hash: str = "") -> dict:
        return _plain({
            "tool": TOOL,
            "version": _version(),
            "problem_hash": problem_hash,
            "report": self.name,
            "passed": self.passed,
            "failures": self.failures,
            "aggregates": self.aggregates,
            "records": self.records,
        })


MeasureReport = ScanReport
NTAReport = ScanReport


def dump_json(doc: dict, path=None) -> str:
    text = json.dumps(_plain(doc), indent=2, sort_keys=True)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def bundle(reports: list, problem_hash: str, extra: Optional[dict] = None) -> dict:
    """One JSON document holding several scan reports."""
    passed = [r.passed for r in reports if r.passed is not None]
    doc = {
        "tool": TOOL,
        "version": _version(),
        "problem_hash": problem_hash,
        "passed": all(passed),
        "records": [r.to_dict(problem_hash) for r in reports],
        "aggregates": {r.name: r.aggregates for r in reports},
        "failures": [f"{r.name}: {f}" for r in reports for f in r.failures],
    }
    if extra:
        doc.update(extra)
    return _plain(doc)


def summary_rows(docs: list) -> list:
    """Flatten report documents into CSV rows (one row per scan)."""
    rows = []
    for src, doc in docs:
        subs = doc.get("records", []) if "report" not in doc else [doc]
        for sub in subs:
            if not isinstance(sub, dict) or "report" not in sub:
                continue
            row = {"source": src, "problem_hash": doc.get("problem_hash", ""), "report": sub["report"],
                   "passed": sub.get("passed")}
            for k, v in sorted(sub.get("aggregates", {}).items()):
                if isinstance(v, (int, float, str, bool)) or v is None:
                    row[k] = v
            rows.append(row)
    return rows


def rows_to_csv(rows: list) -> str:
    keys: list = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()
