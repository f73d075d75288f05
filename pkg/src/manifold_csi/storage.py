"""MLCF matrix files: the binary container every module uses for matrices.

Layout (all little-endian):

    bytes 0-3   magic ``MLCF``
    u32         format version (currently 1)
    u8          dtype code: 1 = float64, 2 = complex128 (interleaved re/im f64)
    u64         rows
    u64         cols
    payload     row-major scalars
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

__all__ = ["write_matrix", "read_matrix", "atomic_write_bytes", "atomic_write_text"]

MAGIC = b"MLCF"
VERSION = 1
DTYPE_REAL = 1
DTYPE_COMPLEX = 2

_HEADER = struct.Struct("<4sIBQQ")


class FormatError(ValueError):
    """Raised when a matrix file is malformed or truncated."""


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write via a temp file and rename, so readers never see partial files."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_matrix(path: str | Path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
    if np.iscomplexobj(arr):
        code = DTYPE_COMPLEX
        payload = np.ascontiguousarray(arr, dtype="<c16")
    else:
        code = DTYPE_REAL
        payload = np.ascontiguousarray(arr, dtype="<f8")
    header = _HEADER.pack(MAGIC, VERSION, code, arr.shape[0], arr.shape[1])
    atomic_write_bytes(path, header + payload.tobytes(order="C"))


def read_matrix(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, code, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if code == DTYPE_REAL:
        dtype, itemsize = np.dtype("<f8"), 8
    elif code == DTYPE_COMPLEX:
        dtype, itemsize = np.dtype("<c16"), 16
    else:
        raise FormatError(f"{path}: unknown dtype code {code}")
    expected = _HEADER.size + rows * cols * itemsize
    if len(data) < expected:
        raise FormatError(f"{path}: payload truncated ({len(data)} < {expected} bytes)")
    flat = np.frombuffer(data, dtype=dtype, count=rows * cols, offset=_HEADER.size)
    return flat.reshape(rows, cols).astype(dtype.newbyteorder("="), copy=True)
