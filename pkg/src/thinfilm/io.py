"""On-disk artifacts: field snapshots, energy logs, key=value configs.

Snapshot format (little endian): magic ``TFGF``, u32 version, u32 dim,
u32 n, f64 box length, f64 time, then n^dim float64 cell values in C order
with the x index fastest.  A text sidecar ``<name>.meta`` repeats the
header as key=value lines; timestamps live only in the sidecar so the
binary artifact of a seeded run is byte-reproducible.

Energy logs are plain CSV with a fixed header; floats are printed with 17
significant digits so parse -> print is a fixpoint and values round-trip
exactly.  All writers go through a temp file plus atomic rename.
"""

from __future__ import annotations

import math
import os
import struct
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError
from .grid import Grid

SNAPSHOT_MAGIC = b"TFGF"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIdd")

ENERGY_HEADER = "t,energy,modified_energy,mass,min_phi,psd_iters,residual"


@dataclass
class EnergyRecord:
    """One row of the energy log; nan marks fields without a defined value."""

    t: float
    energy: float
    modified_energy: float
    mass: float
    min_phi: float
    psd_iters: int
    residual: float


def format_float(x: float) -> str:
    """Shortest-faithful decimal: 17 significant digits, round-trip exact."""
    return f"{float(x):.17g}"


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(path, text: str) -> None:
    """Write a small text artifact through the same temp+rename path."""
    _atomic_write_bytes(Path(path), text.encode())


def write_field_snapshot(path, grid: Grid, values: np.ndarray, t: float) -> None:
    """Write one cell field plus its text sidecar atomically."""
    path = Path(path)
    grid.validate_field(values)
    header = _HEADER.pack(
        SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.dim, grid.n, grid.length, float(t)
    )
    data = np.ascontiguousarray(values, dtype="<f8").tobytes()
    _atomic_write_bytes(path, header + data)
    meta_lines = [
        f"magic={SNAPSHOT_MAGIC.decode()}",
        f"version={SNAPSHOT_VERSION}",
        f"dim={grid.dim}",
        f"n={grid.n}",
        f"length={format_float(grid.length)}",
        f"time={format_float(t)}",
        f"cells={grid.num_cells}",
        f"created={datetime.now(timezone.utc).isoformat()}",
    ]
    _atomic_write_bytes(
        path.with_name(path.name + ".meta"), ("\n".join(meta_lines) + "\n").encode()
    )


def read_field_snapshot(path):
    """Read a snapshot; returns (grid, values, t).  FormatError on mismatch."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, dim, n, length, t = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    try:
        grid = Grid(dim, n, length)
    except ValueError as exc:
        raise FormatError(f"{path}: invalid header fields: {exc}") from exc
    expected = _HEADER.size + grid.num_cells * 8
    if len(raw) != expected:
        raise FormatError(f"{path}: size {len(raw)} does not match header ({expected})")
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(grid.shape)
    return grid, values.copy(), t


def write_energy_log(path, records) -> None:
    """Write EnergyRecord rows as CSV (atomic)."""
    lines = [ENERGY_HEADER]
    for rec in records:
        lines.append(
            ",".join(
                (
                    format_float(rec.t),
                    format_float(rec.energy),
                    format_float(rec.modified_energy),
                    format_float(rec.mass),
                    format_float(rec.min_phi),
                    str(int(rec.psd_iters)),
                    format_float(rec.residual),
                )
            )
        )
    _atomic_write_bytes(Path(path), ("\n".join(lines) + "\n").encode())


def read_energy_log(path):
    """Parse an energy CSV back into EnergyRecord rows."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln]
    if not lines or lines[0] != ENERGY_HEADER:
        head = lines[0] if lines else "<empty>"
        raise FormatError(f"{path}: expected header {ENERGY_HEADER!r}, got {head!r}")
    records = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 7:
            raise FormatError(f"{path}: bad row {ln!r}")
        try:
            records.append(
                EnergyRecord(
                    t=float(parts[0]),
                    energy=float(parts[1]),
                    modified_energy=float(parts[2]),
                    mass=float(parts[3]),
                    min_phi=float(parts[4]),
                    psd_iters=int(parts[5]),
                    residual=float(parts[6]),
                )
            )
        except ValueError as exc:
            raise FormatError(f"{path}: bad row {ln!r}: {exc}") from exc
    return records


def load_config(path) -> dict:
    """Read a key=value file: one pair per line, # comments, no duplicates."""
    out: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def nan_to_none(x: float):
    return None if math.isnan(x) else x
