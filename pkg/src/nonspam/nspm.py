"""NSPM coefficient files.

Layout (little-endian): magic b"NSPM", u32 version (=1), u32 rows, u32 cols,
u32 m, m float64 time stamps, then m*rows*cols float64 coefficients in
bin-major, row-major order.
"""

import struct
from typing import Optional

import numpy as np

from .errors import FormatError, NonSpamIOError
from .frame import ActivationTensor
from .spatial import PixelGrid

MAGIC = b"NSPM"
VERSION = 1
HEADER = struct.Struct("<4s4I")


def encode(acts: ActivationTensor) -> bytes:
    header = HEADER.pack(MAGIC, VERSION, acts.grid.rows, acts.grid.cols, acts.m)
    stamps = np.asarray(acts.time_bins, dtype="<f8").tobytes()
    payload = np.ascontiguousarray(acts.coeffs, dtype="<f8").tobytes()
    return header + stamps + payload


def decode(data: bytes, path: Optional[str] = None) -> ActivationTensor:
    if len(data) < HEADER.size:
        raise FormatError(
            f"truncated header: {len(data)} of {HEADER.size} bytes",
            offset=len(data),
            path=path,
        )
    magic, version, rows, cols, m = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0, path=path)
    if version != VERSION:
        raise FormatError(
            f"unsupported NSPM version {version}, expected {VERSION}", offset=4, path=path
        )
    if rows < 1 or cols < 1 or m < 1:
        raise FormatError(
            f"invalid dimensions rows={rows} cols={cols} m={m}", offset=8, path=path
        )

    offset = HEADER.size
    expected = offset + 8 * m + 8 * m * rows * cols
    if len(data) != expected:
        raise FormatError(
            f"payload size mismatch: file has {len(data)} bytes, layout needs {expected}",
            offset=min(len(data), expected),
            path=path,
        )
    stamps = np.frombuffer(data, dtype="<f8", count=m, offset=offset)
    if not np.all(np.isfinite(stamps)):
        raise FormatError("time stamps must be finite", offset=offset, path=path)
    if np.any(np.diff(stamps) <= 0):
        raise FormatError("time stamps must be strictly increasing", offset=offset, path=path)
    offset += 8 * m
    coeffs = np.frombuffer(data, dtype="<f8", count=m * rows * cols, offset=offset)
    return ActivationTensor(
        PixelGrid(rows, cols),
        [float(t) for t in stamps],
        coeffs.reshape(m, rows, cols).astype(float),
    )


def write_coefficients(path: str, acts: ActivationTensor) -> None:
    try:
        with open(path, "wb") as f:
            f.write(encode(acts))
    except OSError as e:
        raise NonSpamIOError(f"cannot write coefficients to {path}: {e}") from e


def read_coefficients(path: str) -> ActivationTensor:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise NonSpamIOError(f"cannot read coefficients from {path}: {e}") from e
    return decode(data, path=path)
