"""Binary persistence for noise and field paths.

Layout: a 64-byte header of eight little-endian 8-byte fields
(magic, version, nt, nx, dt, dx, seed, replica) followed by the raw
float64 array in row-major order.  Noise files store nt rows, field files
nt + 1 rows.  The grid is reconstructed from (nt, nx, dt, dx).
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from .domain import FieldPath, GridSpec
from .errors import InvalidInputError
from .noise import NoisePath

_HEADER = struct.Struct("<QQQQddQQ")
MAGIC_NOISE = int.from_bytes(b"STWNOISE", "little")
MAGIC_FIELD = int.from_bytes(b"STWFIELD", "little")
VERSION = 1


def _encode(magic: int, grid: GridSpec, seed: int, replica: int, data: np.ndarray) -> bytes:
    header = _HEADER.pack(magic, VERSION, grid.nt, grid.nx, grid.dt, grid.dx, seed, replica)
    arr = np.ascontiguousarray(data, dtype="<f8")
    return header + arr.tobytes()


def _write(path, magic: int, grid: GridSpec, seed: int, replica: int, data: np.ndarray):
    with open(path, "wb") as fh:
        fh.write(_encode(magic, grid, seed, replica, data))


def _read(path, magic_expected: int, rows_for):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InvalidInputError(f"{path}: truncated header")
    magic, version, nt, nx, dt, dx, seed, replica = _HEADER.unpack_from(raw)
    if magic != magic_expected:
        raise InvalidInputError(f"{path}: bad magic {magic:#x}")
    if version != VERSION:
        raise InvalidInputError(f"{path}: unsupported version {version}")
    grid = GridSpec(L=nx * dx / 2.0, nx=int(nx), T=nt * dt, nt=int(nt))
    if not (math.isclose(grid.dx, dx, rel_tol=1e-12) and math.isclose(grid.dt, dt, rel_tol=1e-12)):
        raise InvalidInputError(f"{path}: inconsistent grid spacing in header")
    rows = rows_for(int(nt))
    expect = _HEADER.size + rows * int(nx) * 8
    if len(raw) != expect:
        raise InvalidInputError(f"{path}: expected {expect} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(rows, int(nx)).copy()
    return grid, int(seed), int(replica), data


def write_noise_path(path, noise: NoisePath):
    _write(path, MAGIC_NOISE, noise.grid, noise.seed, noise.replica, noise.increments)


def read_noise_path(path) -> NoisePath:
    grid, seed, replica, data = _read(path, MAGIC_NOISE, lambda nt: nt)
    return NoisePath(data, grid, seed=seed, replica=replica)


def write_field_path(path, fieldpath: FieldPath, seed: int = 0, replica: int = 0):
    _write(path, MAGIC_FIELD, fieldpath.grid, seed, replica, fieldpath.values)


def encode_field_path(fieldpath: FieldPath, seed: int = 0, replica: int = 0) -> bytes:
    """Serialized form of write_field_path, for in-memory artifact assembly."""
    return _encode(MAGIC_FIELD, fieldpath.grid, seed, replica, fieldpath.values)


def read_field_path(path):
    """Returns (FieldPath, seed, replica)."""
    grid, seed, replica, data = _read(path, MAGIC_FIELD, lambda nt: nt + 1)
    return FieldPath(data, grid), seed, replica
