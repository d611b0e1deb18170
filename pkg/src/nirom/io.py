"""Binary matrix files and JSON manifests.

A ``ROMB`` file is the 4-byte magic ``b"ROMB"``, two little-endian u32
(rows, cols), then ``rows * cols`` little-endian float64 in column-major
order. Index lists use the same header with magic ``b"ROMI"`` followed by
little-endian u32 values.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

__all__ = ["write_romb", "read_romb", "write_indices", "read_indices", "write_json", "read_json"]

MAGIC = b"ROMB"
INDEX_MAGIC = b"ROMI"
_HEADER = struct.Struct("<4sII")


def write_romb(path, matrix):
    a = np.asarray(matrix, dtype="<f8")
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise FormatError("ROMB stores 1-D or 2-D arrays only")
    rows, cols = a.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols))
        fh.write(np.asfortranarray(a).tobytes(order="F"))


def read_romb(path):
    """Read a ``ROMB`` file as a 2-D float64 array."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    return np.ascontiguousarray(flat.reshape((rows, cols), order="F"), dtype=float)


def write_indices(path, indices):
    idx = np.asarray(indices, dtype="<u4").ravel()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(INDEX_MAGIC, idx.size, 1))
        fh.write(idx.tobytes())


def read_indices(path):
    data = Path(path).read_bytes()
    magic, n, _ = _HEADER.unpack_from(data)
    if magic != INDEX_MAGIC or len(data) != _HEADER.size + 4 * n:
        raise FormatError(f"{path}: not an index file")
    return np.frombuffer(data, dtype="<u4", offset=_HEADER.size).astype(np.int64)


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
