"""Bit-stable simulation outputs: time series, snapshots, checkpoints.

``timeseries.csv`` carries one row per accepted step with a fixed header and
values printed to 17 significant digits, so identical runs produce byte-
identical files.  ``snapshot_<index>.csv`` holds the nodal fields at each
snapshot time.  ``checkpoint.bin`` is a sequence of length-prefixed
little-endian records (config digest, current state, accumulated rows,
accumulated snapshots) sufficient to resume a run bit-for-bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import config_hash
from .errors import ConfigError
from .geometry import build_domain
from .solver import FieldState, Trajectory

__all__ = [
    "TIMESERIES_HEADER",
    "write_outputs",
    "write_checkpoint",
    "load_checkpoint",
    "ResumePayload",
]

TIMESERIES_HEADER = ("t,dt,energy_total,entropy_total,energy_residual,"
                     "entropy_production,dissipation_total,mean_w,theta_min,"
                     "theta_floor,chi_mean,p_min,p_max,h_constant,"
                     "newton_iters_p,newton_iters_theta")

_CHECKPOINT_MAGIC = b"CRYOPORO"
_CHECKPOINT_VERSION = 1


def _g17(value: float) -> str:
    return format(float(value), ".17g")


def _render_timeseries(rows) -> str:
    lines = [TIMESERIES_HEADER]
    for row in rows:
        floats = [_g17(v) for v in row[:14]]
        lines.append(",".join(floats + [str(int(row[14])), str(int(row[15]))]))
    return "\n".join(lines) + "\n"


def _render_snapshot(state: FieldState, x: np.ndarray) -> str:
    lines = ["x,p,w,chi,theta"]
    for i in range(x.size):
        lines.append(",".join(_g17(v) for v in
                              (x[i], state.p[i], state.w[i],
                               state.chi[i], state.theta[i])))
    return "\n".join(lines) + "\n"


def write_outputs(trajectory: Trajectory, out_dir) -> Path:
    """Write timeseries.csv, snapshot_<i>.csv and checkpoint.bin to out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "timeseries.csv").write_bytes(
        _render_timeseries(trajectory.rows).encode())
    x = build_domain(trajectory.config).x
    for index, state in enumerate(trajectory.states):
        (out / f"snapshot_{index}.csv").write_bytes(
            _render_snapshot(state, x).encode())
    write_checkpoint(out / "checkpoint.bin", trajectory)
    return out


@dataclass
class ResumePayload:
    state: FieldState
    records: list = field(default_factory=list)     # restored numeric rows
    snapshots: list = field(default_factory=list)   # (time, FieldState) pairs


def _pack_record(payload: bytes) -> bytes:
    return struct.pack("<Q", len(payload)) + payload


def _pack_state(state: FieldState) -> bytes:
    n = state.p.size
    body = struct.pack("<dQ", state.t, n)
    for arr in (state.p, state.w, state.chi, state.theta):
        body += np.asarray(arr, dtype="<f8").tobytes()
    return body


def _unpack_state(body: bytes) -> FieldState:
    t, n = struct.unpack_from("<dQ", body, 0)
    offset = 16
    arrays = []
    for _ in range(4):
        arrays.append(np.frombuffer(body, dtype="<f8", count=n, offset=offset).copy())
        offset += 8 * n
    return FieldState(t, *arrays)


def write_checkpoint(path, trajectory: Trajectory) -> None:
    """Serialise the checkpoint as length-prefixed little-endian records."""
    rows = trajectory.rows
    final = trajectory.current_state
    if final is None:
        final = trajectory.final_state if trajectory.states else FieldState(
            0.0, np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0))
    blob = _CHECKPOINT_MAGIC + struct.pack("<I", _CHECKPOINT_VERSION)
    blob += _pack_record(config_hash(trajectory.config))
    blob += _pack_record(_pack_state(final))
    rows_body = struct.pack("<Q", len(rows))
    for row in rows:
        rows_body += struct.pack("<14d2Q", *[float(v) for v in row[:14]],
                                 int(row[14]), int(row[15]))
    blob += _pack_record(rows_body)
    snaps_body = struct.pack("<Q", len(trajectory.states))
    for t, state in zip(trajectory.snapshot_times, trajectory.states):
        body = _pack_state(state)
        snaps_body += struct.pack("<d", t) + struct.pack("<Q", len(body)) + body
    blob += _pack_record(snaps_body)
    Path(path).write_bytes(blob)


def load_checkpoint(path, config) -> ResumePayload:
    """Read a checkpoint and verify it belongs to ``config``."""
    raw = Path(path).read_bytes()
    if raw[:8] != _CHECKPOINT_MAGIC:
        raise ConfigError(f"{path}: not a cryoporo checkpoint")
    version = struct.unpack_from("<I", raw, 8)[0]
    if version != _CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    offset = 12

    def take():
        nonlocal offset
        (length,) = struct.unpack_from("<Q", raw, offset)
        offset += 8
        payload = raw[offset:offset + length]
        offset += length
        return payload

    digest = take()
    if digest != config_hash(config):
        raise ConfigError(f"{path}: checkpoint does not match this configuration "
                          "(config hash mismatch)")
    state = _unpack_state(take())

    rows_body = take()
    (n_rows,) = struct.unpack_from("<Q", rows_body, 0)
    rows = []
    pos = 8
    for _ in range(n_rows):
        values = struct.unpack_from("<14d2Q", rows_body, pos)
        pos += 14 * 8 + 2 * 8
        rows.append(tuple(values))

    snaps_body = take()
    (n_snaps,) = struct.unpack_from("<Q", snaps_body, 0)
    snaps = []
    pos = 8
    for _ in range(n_snaps):
        (t,) = struct.unpack_from("<d", snaps_body, pos)
        pos += 8
        (length,) = struct.unpack_from("<Q", snaps_body, pos)
        pos += 8
        snaps.append((t, _unpack_state(snaps_body[pos:pos + length])))
        pos += length
    return ResumePayload(state=state, records=rows, snapshots=snaps)
