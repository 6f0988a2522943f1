"""GPF1 field snapshots.

Layout (all little-endian)::

    offset  size  content
    0       4     magic b"GPF1"; the trailing digit is the format version
    4       4     u32 n (grid points per axis)
    8       8     f64 L (half-width; x_j = (j - n/2) * 2L/n)
    16      1     u8 complex flag (0 real, 1 complex)
    17      ...   n*n row-major samples: f64 each, or (re, im) f64 pairs if complex

Row-major means the first index (x) varies slowest.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .discretization import Field, GridSpec, build_grid
from .errors import GridError

MAGIC = b"GPF"
VERSION = b"1"
_HEADER = struct.Struct("<4sIdB")


def write_field(path, field: Field) -> Path:
    path = Path(path)
    g = field.grid
    cplx = field.is_complex
    header = _HEADER.pack(MAGIC + VERSION, g.n, g.L, 1 if cplx else 0)
    data = np.ascontiguousarray(field.values, dtype="<c16" if cplx else "<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes(order="C"))
    return path


def read_field(path, grid: GridSpec | None = None) -> Field:
    """Read a snapshot; if ``grid`` is given the stored grid must match it."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise GridError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, n, L, flag = _HEADER.unpack_from(raw)
    if magic[:3] != MAGIC:
        raise GridError(f"{path}: bad magic {magic!r}")
    if magic[3:] != VERSION:
        raise GridError(f"{path}: unsupported format version {magic[3:]!r} (expected {VERSION!r})")
    if flag not in (0, 1):
        raise GridError(f"{path}: bad complex flag {flag}")
    width = 16 if flag else 8
    expected = _HEADER.size + n * n * width
    if len(raw) != expected:
        raise GridError(f"{path}: size {len(raw)} bytes, expected {expected} for n={n}")
    stored = build_grid(n, L)
    if grid is not None and (grid.n, grid.L) != (stored.n, stored.L):
        raise GridError(f"{path}: grid mismatch, file has n={stored.n}, L={stored.L:g}; "
                        f"expected n={grid.n}, L={grid.L:g}")
    vals = np.frombuffer(raw, dtype="<c16" if flag else "<f8", offset=_HEADER.size).reshape(n, n)
    return Field(stored, vals.astype(complex if flag else float))
