"""Experiment reports: finiteness-checked metrics plus CSV tables."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalError

__all__ = ["Table", "ExperimentReport", "emit_report", "load_report", "histogram_table",
           "config_hash", "REPORT_FILES"]

REPORT_FILES = ("report.json", "experience.csv", "values.csv", "histogram.csv", "scatter.csv")
TIMING_KEY = "wall_clock_s"


def _clean(obj, path="report"):
    """JSON-ready copy of ``obj``; rejects NaN and infinities."""
    if isinstance(obj, dict):
        return {str(k): _clean(v, f"{path}.{k}") for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v, f"{path}[{i}]") for i, v in enumerate(obj)]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist(), path)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        if not math.isfinite(val):
            raise NumericalError(f"non-finite metric at {path}: {val}")
        return val
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"unsupported value at {path}: {type(obj).__name__}")


@dataclass(frozen=True)
class Table:
    columns: tuple
    rows: list

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                            for v in row])


@dataclass
class ExperimentReport:
    """Metrics document (``data``) and plotting tables keyed by file name."""

    data: dict
    tables: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = _clean(self.data)

    def to_dict(self) -> dict:
        return json.loads(self.to_json())

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)

    def without_timing(self) -> dict:
        doc = self.to_dict()
        doc.pop(TIMING_KEY, None)
        return doc

    def __getitem__(self, key):
        return self.data[key]


def config_hash(config_doc: dict, version: str) -> str:
    blob = json.dumps({"config": config_doc, "version": version}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def histogram_table(samples, bins: int, lo: float, hi: float, references=None) -> Table:
    """Histogram over ``[lo, hi]`` with probability mass and density per bin.

    ``references`` maps a column name to a callable density evaluated at
    the bin centres.
    """
    samples = np.asarray(samples, dtype=float)
    counts, edges = np.histogram(samples, bins=bins, range=(lo, hi))
    total = counts.sum()
    mass = counts / total if total else np.zeros(bins)
    width = np.diff(edges)
    centres = 0.5 * (edges[:-1] + edges[1:])
    refs = references or {}
    cols = ("bin_left", "bin_right", "count", "mass", "density", *refs)
    ref_vals = [np.asarray(f(centres), dtype=float) for f in refs.values()]
    rows = []
    for i in range(bins):
        rows.append([float(edges[i]), float(edges[i + 1]), int(counts[i]), float(mass[i]),
                     float(mass[i] / width[i])] + [float(r[i]) for r in ref_vals])
    return Table(cols, rows)


def emit_report(report: ExperimentReport, out_dir) -> list:
    """Write ``report.json`` and every table; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    paths.append(path)
    for name in REPORT_FILES[1:]:
        table = report.tables.get(name)
        if table is None:
            continue
        path = os.path.join(out_dir, name)
        table.write(path)
        paths.append(path)
    return paths


def load_report(out_dir) -> dict:
    with open(os.path.join(out_dir, "report.json")) as fh:
        return json.load(fh)
