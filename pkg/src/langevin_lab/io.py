"""File formats: binary position dumps, JSONL snapshot streams and observable CSVs.

Binary layout (little-endian), 32-byte header then row-major float64 data::

    0   4s  magic b"LLAB"
    4   u4  version
    8   u8  n_rows  (paths, or grid nodes for fields)
    16  u8  n_cols  (dimension d)
    24  f8  t
"""

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

MAGIC = b"LLAB"
VERSION = 1
HEADER = struct.Struct("<4sIQQd")
FULL_POSITIONS_LIMIT = 10 ** 6


def write_positions(path, positions, t):
    positions = np.ascontiguousarray(np.atleast_2d(positions), dtype="<f8")
    n, d = positions.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, n, d, float(t)))
        fh.write(positions.tobytes(order="C"))


def read_positions(path):
    """Return ``(positions, t)``."""
    with open(path, "rb") as fh:
        magic, version, n, d, t = HEADER.unpack(fh.read(HEADER.size))
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * d:
        raise ValueError(f"{path}: expected {n * d} values, found {data.size}")
    return data.reshape(n, d).astype(float), t


def write_field(path, state):
    """phi at the nodes as an ``(n_nodes, 1)`` dump plus a ``.nodes`` coordinate sidecar."""
    path = Path(path)
    write_positions(path, state.phi[:, None], state.t)
    sidecar = path.with_suffix(".nodes" + path.suffix)
    write_positions(sidecar, state.grid.nodes, 0.0)
    return path, sidecar


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path):
    """Return ``(columns, array)`` with one row per record."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        columns = next(r)
        rows = [[float(v) for v in row] for row in r]
    return columns, np.array(rows, dtype=float).reshape(len(rows), len(columns))


def snapshot_record(snapshot, obj=None, include_positions=None):
    n, d = snapshot.positions.shape
    if include_positions is None:
        include_positions = n * d <= FULL_POSITIONS_LIMIT
    rec = {
        "t": float(snapshot.t),
        "step": int(snapshot.step),
        "n_paths": n,
        "dim": d,
        "diverged": bool(snapshot.diverged),
        "mean": snapshot.positions.mean(axis=0).tolist(),
        "var": snapshot.positions.var(axis=0).tolist(),
        "max_sup_norm": float(np.max(snapshot.sup_norm_so_far)),
    }
    if obj is not None and not snapshot.diverged:
        g = np.asarray(obj.gap(snapshot.positions), dtype=float)
        rec["gap_mean"] = float(g.mean())
    if include_positions:
        rec["positions"] = snapshot.positions.tolist()
    return rec


class JsonlSink:
    """Append-only JSON-lines writer, one record per snapshot."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w")

    def write(self, record):
        self._fh.write(json.dumps(record, sort_keys=True, allow_nan=True) + "\n")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
