"""On-disk formats: field snapshots, versioned JSON and CSV reports."""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .fields import Grid

MAGIC = b"BARD"
VERSION = 1
_HEADER = struct.Struct("<4sIIdI")

LEDGER_SCHEMA = "bardina.energy_ledger/1"
INDEX_SCHEMA = "bardina.trajectory_index/1"
REPORT_SCHEMA = "bardina.estimate_report/1"
PICARD_SCHEMA = "bardina.picard_report/1"
KERNEL_SCHEMA = "bardina.kernel_table/1"


def write_snapshot(path, grid: Grid, field: np.ndarray) -> None:
    """Write a scalar or vector field.

    Layout: little-endian header ``magic, version u32, N u32, L f64,
    n_components u32`` followed by each component as f64 with x1 varying
    fastest.
    """
    comps = field.reshape(-1, *grid.shape)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, grid.N, float(grid.L), comps.shape[0]))
        for c in comps:
            fh.write(np.asarray(c, dtype="<f8").ravel(order="F").tobytes())


def read_snapshot(path) -> tuple[Grid, np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, n, length, ncomp = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    grid = Grid(n, length)
    expected = _HEADER.size + 8 * ncomp * n**3
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(data)}")
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    comps = flat.reshape(ncomp, n**3)
    field = np.stack([c.reshape(grid.shape, order="F") for c in comps])
    return grid, field[0] if ncomp == 1 else field


def write_json(path, payload: dict, schema: str) -> None:
    Path(path).write_text(json.dumps({"schema": schema, **payload}, indent=2, default=_jsonable))


def write_jsonl(path, records, schema: str) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"schema": schema}) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, default=_jsonable) + "\n")


def write_csv(path, header: list[str], rows, schema: str) -> None:
    """CSV preceded by a ``# schema: ...`` comment line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {schema}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def read_csv(path) -> tuple[str, list[str], np.ndarray]:
    with open(path) as fh:
        first = fh.readline().strip()
        schema = first.removeprefix("# schema:").strip()
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return schema, header, np.array(rows).reshape(-1, len(header))


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")
