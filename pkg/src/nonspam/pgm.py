"""Grayscale PGM reader/writer (P5 binary and P2 plain, 8 or 16 bit)."""

import math

import numpy as np

from .errors import FormatError, NonSpamIOError, UnsupportedFormatError
from .frame import Image

WHITESPACE = b" \t\n\r\v\f"
UNSUPPORTED_MAGIC = {
    b"P1": "plain PBM (bitmap)",
    b"P3": "plain PPM (colour)",
    b"P4": "binary PBM (bitmap)",
    b"P6": "binary PPM (colour)",
    b"P7": "PAM",
}
MAX_MAXVAL = 65535


def _skip_separators(data: bytes, pos: int) -> int:
    """Skips whitespace and '#' comments (to end of line)."""
    while pos < len(data):
        byte = data[pos : pos + 1]
        if byte == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        elif byte in WHITESPACE:
            pos += 1
        else:
            break
    return pos


def _read_integer(data: bytes, pos: int, what: str, path):
    pos = _skip_separators(data, pos)
    if pos >= len(data):
        raise FormatError(f"unexpected end of file while reading {what}", pos, path)
    start = pos
    while pos < len(data) and data[pos : pos + 1] not in WHITESPACE and data[pos] != ord("#"):
        pos += 1
    token = data[start:pos]
    if not token.isdigit():
        raise FormatError(f"expected a decimal integer for {what}, got {token[:16]!r}", start, path)
    return int(token), pos


def decode(data: bytes, path=None) -> Image:
    """Parses a P5 or P2 grayscale image. Pixels keep the file's scale."""
    magic = data[:2]
    if magic in UNSUPPORTED_MAGIC:
        raise UnsupportedFormatError(
            f"{UNSUPPORTED_MAGIC[magic]} is not a grayscale PGM", 0, path
        )
    if magic not in (b"P5", b"P2"):
        raise FormatError(f"bad magic {magic!r}, expected b'P5' or b'P2'", 0, path)

    width, pos = _read_integer(data, 2, "width", path)
    height, pos = _read_integer(data, pos, "height", path)
    maxval_at = _skip_separators(data, pos)
    maxval, pos = _read_integer(data, pos, "maxval", path)
    if width < 1 or height < 1:
        raise FormatError(f"invalid size {width}x{height}", 2, path)
    if not 1 <= maxval <= MAX_MAXVAL:
        raise FormatError(f"maxval {maxval} outside [1, {MAX_MAXVAL}]", maxval_at, path)

    count = width * height
    if magic == b"P5":
        if pos >= len(data) or data[pos : pos + 1] not in WHITESPACE:
            raise FormatError("missing whitespace before raster", pos, path)
        pos += 1
        dtype = ">u2" if maxval > 255 else "u1"
        needed = count * np.dtype(dtype).itemsize
        if len(data) - pos < needed:
            raise FormatError(
                f"truncated raster: {len(data) - pos} of {needed} bytes", len(data), path
            )
        samples = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(float)
        over = np.flatnonzero(samples > maxval)
        if over.size:
            offset = pos + int(over[0]) * np.dtype(dtype).itemsize
            raise FormatError(f"sample exceeds maxval {maxval}", offset, path)
    else:
        samples = np.empty(count, dtype=float)
        for k in range(count):
            start = _skip_separators(data, pos)
            value, pos = _read_integer(data, pos, f"sample {k}", path)
            if value > maxval:
                raise FormatError(f"sample {value} exceeds maxval {maxval}", start, path)
            samples[k] = value

    return Image.from_array(samples.reshape(height, width), maxval=maxval)


def encode(pixels: np.ndarray, maxval: int = 255) -> bytes:
    """P5 bytes; values clamped to [0, maxval] and rounded half-up."""
    if not 1 <= maxval <= MAX_MAXVAL:
        raise FormatError(f"maxval {maxval} outside [1, {MAX_MAXVAL}]")
    pixels = np.asarray(pixels, dtype=float)
    levels = np.floor(np.clip(pixels, 0.0, float(maxval)) + 0.5)
    dtype = ">u2" if maxval > 255 else "u1"
    rows, cols = pixels.shape
    header = f"P5\n{cols} {rows}\n{maxval}\n".encode("ascii")
    return header + levels.astype(dtype).tobytes()


def normalized(pixels: np.ndarray, maxval: int = 255):
    """Min-max stretch to [0, maxval]. Returns (stretched, low, high)."""
    low = float(np.min(pixels))
    high = float(np.max(pixels))
    span = high - low
    if span == 0 or not math.isfinite(span):
        return np.zeros_like(pixels, dtype=float), low, high
    return (pixels - low) * (maxval / span), low, high


def read_pgm(path: str) -> Image:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise NonSpamIOError(f"cannot read image {path}: {e}") from e
    return decode(data, path=path)


def write_pgm(path: str, pixels: np.ndarray, maxval: int = 255) -> None:
    data = encode(pixels, maxval)
    try:
        with open(path, "wb") as f:
            f.write(data)
    except OSError as e:
        raise NonSpamIOError(f"cannot write image {path}: {e}") from e
