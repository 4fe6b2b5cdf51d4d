"""Diagnostics CSV, legacy VTK snapshots and binary checkpoints.

Checkpoint layout (all little-endian):

    8s   magic b"DROPCHK\\0"
    u4   format version (1)
    u4   n_z, u4 n_r
    f8   length_L, f8 radius_a
    u4   byte length of the parameter JSON, followed by that UTF-8 text
    i8   step index, f8 time
    f8 x 6  U, Q, R, T, K, S
    f8   accumulated boundary work, f8 last boundary rate (NaN if unset)
    f8   running droplet radius, u1 pinch latch
    f8 x (n_z*n_r) for each of phi, mu, v_z, v_r, p, p_prev (row-major, r fastest)
"""
from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import Grid, Params, State, make_grid
from .diagnostics import BoundaryWorkTracker, DiagnosticsRecord

MAGIC = b"DROPCHK\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


def write_diagnostics(records, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DiagnosticsRecord.COLUMNS)
        for rec in records:
            w.writerow(rec.row())


def read_diagnostics(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_vtk(state: State, grid: Grid, path: str | Path) -> None:
    """Legacy ASCII structured grid with cell-centre points, z varying fastest."""
    Z, R = grid.mesh()
    lines = ["# vtk DataFile Version 3.0",
             f"phase field snapshot step {state.step_index} time {state.time:.17g}",
             "ASCII", "DATASET STRUCTURED_GRID",
             f"DIMENSIONS {grid.n_z} {grid.n_r} 1",
             f"POINTS {grid.size} double"]
    lines += [f"{z:.17g} {r:.17g} 0" for z, r in zip(Z.T.ravel(), R.T.ravel())]
    lines.append(f"POINT_DATA {grid.size}")
    for name in ("phi", "mu", "p", "v_z", "v_r"):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += ["%.17g" % v for v in getattr(state, name).T.ravel()]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class Checkpoint:
    grid: Grid
    params: Params
    state: State
    tracker: BoundaryWorkTracker
    radius_max: float
    pinched: bool


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    g, st = ckpt.grid, ckpt.state
    pjson = json.dumps(ckpt.params.derived_free(), sort_keys=True).encode("utf-8")
    last = ckpt.tracker.last_rate
    parts = [MAGIC, struct.pack("<III", VERSION, g.n_z, g.n_r),
             struct.pack("<dd", g.length_L, g.radius_a),
             struct.pack("<I", len(pjson)), pjson,
             struct.pack("<qd", st.step_index, st.time),
             struct.pack("<6d", *(getattr(st, k) for k in State.SCALAR_NAMES)),
             struct.pack("<dd", ckpt.tracker.accumulated, math.nan if last is None else last),
             struct.pack("<dB", ckpt.radius_max, 1 if ckpt.pinched else 0)]
    for name in State.FIELD_NAMES:
        parts.append(np.ascontiguousarray(getattr(st, name), dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> Checkpoint:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    off = 8

    def take(fmt):
        nonlocal off
        vals = struct.unpack_from(fmt, buf, off)
        off += struct.calcsize(fmt)
        return vals

    version, n_z, n_r = take("<III")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    L, a = take("<dd")
    (plen,) = take("<I")
    params = Params(**json.loads(buf[off:off + plen].decode("utf-8")))
    off += plen
    step, time = take("<qd")
    scalars = take("<6d")
    acc, last = take("<dd")
    radius_max, pinched = take("<dB")
    grid = make_grid(n_z, n_r, L, a)
    n = n_z * n_r
    fields = {}
    for name in State.FIELD_NAMES:
        arr = np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(n_z, n_r)
        fields[name] = arr.astype(float)
        off += 8 * n
    if off != len(buf):
        raise CheckpointError("trailing bytes in checkpoint")
    state = State(**fields, **dict(zip(State.SCALAR_NAMES, scalars)), step_index=step, time=time)
    tracker = BoundaryWorkTracker(accumulated=acc, last_rate=None if math.isnan(last) else last)
    return Checkpoint(grid, params, state, tracker, radius_max, bool(pinched))
