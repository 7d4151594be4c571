"""
Trace files: plot-ready CSV with a schema stamp.

Layout::

    #schema=1
    iteration,objective,...
    0,12.5,...

Floats are written with 17 significant digits so that a trace read back
reproduces the recorded doubles exactly. Traces carry no wall-clock
column: identical runs must produce identical files. Timing goes to the
run summary instead.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from ..errors import ConfigurationError, ContractViolation

__all__ = ["SCHEMA", "ENV_OUTPUT_DIR", "default_output_dir", "TraceWriter", "Trace",
           "read_trace", "format_value", "write_summary", "read_summary"]

SCHEMA = 1
ENV_OUTPUT_DIR = "SCAOPT_OUTPUT_DIR"


def default_output_dir() -> str:
    """``$SCAOPT_OUTPUT_DIR`` or ``./scaopt-out``."""
    return os.environ.get(ENV_OUTPUT_DIR) or os.path.join(os.getcwd(), "scaopt-out")


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


class TraceWriter:
    """
    Append-only CSV writer.

    The first column is the iteration index and must increase strictly;
    every value must be finite. A violation raises
    :class:`ContractViolation` before anything is written for that row.
    """

    def __init__(self, path: str, columns: Sequence[str]):
        if not columns:
            raise ConfigurationError("a trace needs at least one column")
        self.path = path
        self.columns = list(columns)
        self._last = None
        self.rows = 0
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        self._fh = open(path, "w", newline="")
        self._fh.write(f"#schema={SCHEMA}\n")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(self.columns)

    def append(self, row: Dict[str, float]):
        missing = [c for c in self.columns if c not in row]
        if missing:
            raise ContractViolation(f"trace row lacks {missing}", invariant="trace-schema")
        vals = [row[c] for c in self.columns]
        for c, v in zip(self.columns, vals):
            if not math.isfinite(float(v)):
                raise ContractViolation(f"non-finite {c}={v} at {self.columns[0]} {vals[0]}",
                                        invariant="trace-finite")
        it = float(vals[0])
        if self._last is not None and not it > self._last:
            raise ContractViolation(f"{self.columns[0]} {vals[0]} does not increase",
                                    invariant="trace-monotone")
        self._last = it
        self._w.writerow([format_value(v) for v in vals])
        self.rows += 1

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class Trace:
    columns: List[str]
    data: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def __len__(self):
        return self.data.shape[0]


def read_trace(path: str) -> Trace:
    """Parse a trace written by :class:`TraceWriter`, checking the schema stamp."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"#schema={SCHEMA}":
            raise ConfigurationError(f"{path}: unsupported trace schema line {first!r}")
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigurationError(f"{path}: trace has no header")
    cols = rows[0]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ConfigurationError(f"{path}: malformed trace row") from exc
    if data.size == 0:
        data = np.zeros((0, len(cols)))
    if data.shape[1] != len(cols):
        raise ConfigurationError(f"{path}: row width does not match header")
    return Trace(cols, data)


def write_summary(path: str, items: Dict[str, object]):
    with open(path, "w") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {v if isinstance(v, str) else format_value(v)}\n")


def read_summary(path: str) -> Dict[str, str]:
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    return out
