"""Run reports, a deterministic JSON writer and the matrix dump format.

Floats are written in their shortest exactly round-tripping form;
NaN and infinities become null. Timing never enters a report (reports must be
byte-identical across runs); it goes to an append-only JSON-lines run log.

Matrix dump layout (little endian)::

    8 bytes   magic b"SCATMAT1"
    uint64    rows
    uint64    cols
    uint8     1 if complex (interleaved re, im), 0 if real
    32 bytes  sha256 digest of the Fock basis
    float64[] row-major data
"""
from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

REPORT_SCHEMA_VERSION = 1
MAGIC = b"SCATMAT1"
_HEADER = struct.Struct("<8sQQB32s")

LE, GE, RANGE, INFO = "le", "ge", "range", "info"


def fmt_float(x: float) -> str:
    """Shortest representation that round-trips exactly."""
    return repr(float(x))


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, (complex, np.complexfloating)):
        return _encode([obj.real, obj.imag], indent, level)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    return _encode(obj, indent, 0) + "\n"


def compare(value, tolerance, comparison: str) -> bool:
    if comparison == INFO:
        return True
    if value is None or not math.isfinite(value):
        return False
    if comparison == LE:
        return value <= tolerance
    if comparison == GE:
        return value >= tolerance
    if comparison == RANGE:
        lo, hi = tolerance
        return lo <= value <= hi
    raise ValueError(f"unknown comparison {comparison!r}")


@dataclass
class CheckRecord:
    name: str
    value: float
    tolerance: object
    comparison: str
    passed: bool
    inputs_hash: str = ""
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"name": self.name, "inputs_hash": self.inputs_hash, "value": self.value,
                "tolerance": self.tolerance, "comparison": self.comparison,
                "passed": self.passed, "details": self.details}


@dataclass
class RunReport:
    name: str
    config_hash: str
    version: str
    seed: int
    records: list
    artifacts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def record(self, name: str) -> CheckRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {"schema_version": REPORT_SCHEMA_VERSION, "name": self.name,
                "version": self.version, "config_hash": self.config_hash, "seed": self.seed,
                "passed": self.passed, "checks": [r.as_dict() for r in self.records],
                "artifacts": list(self.artifacts)}

    def to_json(self) -> str:
        return dumps(self.as_dict())

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json())
        return path


def load_report(path) -> dict:
    return json.loads(Path(path).read_text())


def revalidate(report: dict) -> list:
    """Recompute every pass flag from value, tolerance and comparison.

    Returns (name, stored, recomputed) for records that fail or disagree.
    """
    if report.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema {report.get('schema_version')!r}")
    bad = []
    for rec in report["checks"]:
        value = rec["value"]
        value = float("nan") if value is None else value
        ok = compare(value, rec["tolerance"], rec["comparison"])
        if not ok or ok != rec["passed"]:
            bad.append((rec["name"], rec["passed"], ok))
    return bad


def append_run_log(path, entry: dict) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def write_matrix_dump(path, matrix, basis_hash: str) -> Path:
    matrix = np.asarray(matrix)
    is_complex = np.iscomplexobj(matrix)
    rows, cols = matrix.shape
    header = _HEADER.pack(MAGIC, rows, cols, int(is_complex), bytes.fromhex(basis_hash))
    data = matrix.astype("<c16" if is_complex else "<f8", copy=False)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(data).tobytes())
    return path


def read_matrix_dump(path):
    """Returns (matrix, basis_hash)."""
    raw = Path(path).read_bytes()
    magic, rows, cols, is_complex, digest = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a matrix dump")
    dtype = "<c16" if is_complex else "<f8"
    data = np.frombuffer(raw, dtype=dtype, offset=_HEADER.size)
    if data.size != rows * cols:
        raise ValueError(f"{path}: truncated matrix dump")
    return data.reshape(rows, cols).copy(), digest.hex()


def write_matrix_csv(path, matrix) -> Path:
    """Rows of ``row,col,re,im`` for plotting tools."""
    matrix = np.asarray(matrix, dtype=complex)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "re", "im"])
        for (i, j), v in np.ndenumerate(matrix):
            w.writerow([i, j, fmt_float(v.real), fmt_float(v.imag)])
    return path


def write_table_csv(path, columns, rows, trailer: Optional[list] = None) -> Path:
    def cell(v):
        if isinstance(v, (float, np.floating)):
            return fmt_float(v) if math.isfinite(v) else "nan"
        return v

    def emit(fh):
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([cell(v) for v in row])
        for row in trailer or []:
            w.writerow([cell(v) for v in row])

    if hasattr(path, "write"):
        emit(path)
        return None
    path = Path(path)
    with open(path, "w", newline="") as fh:
        emit(fh)
    return path
