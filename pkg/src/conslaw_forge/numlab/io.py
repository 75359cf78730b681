"""Output formats: CSV residual series, JSON reports and flat binary snapshots.

Snapshot layout (all little-endian)::

    8 bytes   magic b"CLFSNAP1"
    int32     dims
    int32[d]  cells per axis
    float64[d] extents
    float64   time
    float64[prod(n)] values, row-major (x slowest)
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .balance import BalanceReport

MAGIC = b"CLFSNAP1"


class SnapshotError(ValueError):
    pass


def write_residual_csv(report: BalanceReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t", "dt", "residual", "cumulative"])
        cum = report.cumulative
        dts = np.diff(report.times)
        for k, r in enumerate(report.residuals):
            w.writerow([k + 1, repr(float(report.times[k + 1])), repr(float(dts[k])), repr(float(r)), repr(float(cum[k]))])
    return path


def read_residual_csv(path: str | Path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {key: np.array([float(r[key]) for r in rows]) for key in ("step", "t", "dt", "residual", "cumulative")}


def dumps(obj) -> str:
    """Deterministic JSON (sorted keys, fixed separators)."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_json(obj, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def write_snapshot(path: str | Path, u: np.ndarray, extents, t: float) -> Path:
    u = np.ascontiguousarray(u, dtype="<f8")
    if len(extents) != u.ndim:
        raise SnapshotError("one extent per axis is required")
    head = MAGIC + struct.pack(f"<i{u.ndim}i", u.ndim, *u.shape)
    head += struct.pack(f"<{u.ndim}dd", *map(float, extents), float(t))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(head + u.tobytes(order="C"))
    return path


def read_snapshot(path: str | Path) -> tuple[np.ndarray, tuple[float, ...], float]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise SnapshotError(f"{path}: not a snapshot file")
    pos = 8
    (dims,) = struct.unpack_from("<i", data, pos)
    if dims not in (1, 2, 3):
        raise SnapshotError(f"{path}: bad dimension {dims}")
    pos += 4
    n = struct.unpack_from(f"<{dims}i", data, pos)
    pos += 4 * dims
    *extents, t = struct.unpack_from(f"<{dims}dd", data, pos)
    pos += 8 * (dims + 1)
    count = int(np.prod(n))
    if len(data) - pos != 8 * count:
        raise SnapshotError(f"{path}: expected {count} values")
    u = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(n).astype(float)
    return u, tuple(extents), t
