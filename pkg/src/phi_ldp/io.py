"""Binary field/trajectory files, CSV tables with provenance headers, JSON summaries.

Binary layout (little-endian): 16-byte header ``b"PHI2"``, ``u32 version``,
``u32 d``, ``u32 M``; for a single field the ``M^d`` float64 coefficients
follow.  A trajectory adds a time-grid header ``u64 n_times`` and the
``n_times`` float64 times, then ``n_times * M^d`` float64 states.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from .spectral import SpectralBasis, SpectralField, build_basis
from .trajectory import Trajectory

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "FormatError",
    "write_field",
    "read_field",
    "write_trajectory",
    "read_trajectory",
    "write_csv",
    "write_json",
    "to_jsonable",
]

MAGIC = b"PHI2"
FORMAT_VERSION = 1
KIND_FIELD = 1
KIND_TRAJECTORY = 2
_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    pass


def _header(basis: SpectralBasis) -> bytes:
    return _HEADER.pack(MAGIC, FORMAT_VERSION, basis.d, basis.M)


def _read_header(buf: bytes, L: float) -> tuple[SpectralBasis, int]:
    if len(buf) < _HEADER.size:
        raise FormatError("file too short for header")
    magic, version, d, M = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    return build_basis(d, L, M), _HEADER.size


def write_field(path, x: SpectralField) -> None:
    Path(path).write_bytes(_header(x.basis) + x.coeffs.astype("<f8").tobytes())


def read_field(path, L: float = math.pi) -> SpectralField:
    """The header does not record ``L``; pass it when it differs from pi."""
    buf = Path(path).read_bytes()
    basis, off = _read_header(buf, L)
    c = np.frombuffer(buf, dtype="<f8", offset=off)
    if c.size != basis.size:
        raise FormatError(f"expected {basis.size} coefficients, found {c.size}")
    return SpectralField(basis, c.astype(float))


def write_trajectory(path, u: Trajectory) -> None:
    blob = _header(u.basis) + struct.pack("<Q", u.times.size)
    blob += u.times.astype("<f8").tobytes() + u.states.astype("<f8").tobytes()
    Path(path).write_bytes(blob)


def read_trajectory(path, L: float = math.pi) -> Trajectory:
    buf = Path(path).read_bytes()
    basis, off = _read_header(buf, L)
    (n,) = struct.unpack_from("<Q", buf, off)
    off += 8
    times = np.frombuffer(buf, dtype="<f8", count=n, offset=off)
    states = np.frombuffer(buf, dtype="<f8", offset=off + 8 * n)
    if states.size != n * basis.size:
        raise FormatError("trajectory payload size mismatch")
    return Trajectory(basis, times.astype(float), states.reshape(n, basis.size).astype(float))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows, meta: dict) -> None:
    """CSV with a leading ``# key=value ...`` provenance comment line."""
    with open(path, "w", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={meta[k]}" for k in sorted(meta)) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")
