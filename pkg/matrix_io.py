"""Reader and writer for the LRM1 binary matrix format.

Layout: the magic bytes ``LRM1``, little-endian ``u32`` rows, ``u32`` cols,
then ``rows*cols`` little-endian ``f64`` values in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from dense_linalg import as_matrix
from errors import MatrixFormatError

MAGIC = b"LRM1"
_HEADER = struct.Struct("<4sII")
_MAX_DIM = 2**32 - 1


def encode_matrix(a: np.ndarray) -> bytes:
    """Serialise a finite matrix to LRM1 bytes."""

    a = as_matrix(a)
    rows, cols = a.shape
    if rows > _MAX_DIM or cols > _MAX_DIM:
        raise MatrixFormatError(f"shape {a.shape} does not fit in u32 dimensions")
    payload = np.ascontiguousarray(a, dtype="<f8").tobytes(order="C")
    return _HEADER.pack(MAGIC, rows, cols) + payload


def decode_matrix(blob: bytes) -> np.ndarray:
    """Parse LRM1 bytes; rejects a wrong magic and truncated or padded payloads."""

    if len(blob) < _HEADER.size:
        raise MatrixFormatError(f"payload of {len(blob)} bytes is shorter than the LRM1 header")
    magic, rows, cols = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise MatrixFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if rows == 0 or cols == 0:
        raise MatrixFormatError(f"empty {rows}x{cols} matrix")
    expected = _HEADER.size + 8 * rows * cols
    if len(blob) != expected:
        raise MatrixFormatError(
            f"payload holds {len(blob)} bytes but a {rows}x{cols} matrix needs {expected}"
        )
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size, count=rows * cols)
    matrix = data.astype(np.float64).reshape(rows, cols)
    if not np.all(np.isfinite(matrix)):
        raise MatrixFormatError("matrix contains non-finite entries")
    return matrix


def write_matrix(path: str | Path, a: np.ndarray) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(encode_matrix(a))
    return target


def read_matrix(path: str | Path) -> np.ndarray:
    source = Path(path)
    try:
        blob = source.read_bytes()
    except OSError as exc:
        raise MatrixFormatError(f"cannot read matrix file '{source}': {exc}") from exc
    return decode_matrix(blob)
