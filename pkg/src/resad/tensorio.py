"""RSFT tensor container: a minimal binary format for cached feature tensors.

Layout: magic ``RSFT``, version u16, dtype code u8, rank u8, then one u64 per
dimension and the row-major payload. All integers little-endian. Round-trips
must be bit-exact, so payloads are written with ``tobytes()`` verbatim.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import VersionMismatch

MAGIC = b"RSFT"
VERSION = 1

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<i8")}
_CODE_FOR_DTYPE = {v: k for k, v in _DTYPE_CODES.items()}

_HEADER = struct.Struct("<4sHBB")


def save_tensor(path: str | Path, array: np.ndarray) -> None:
    """Write ``array`` to ``path`` in the RSFT container format."""
    dtype = np.dtype(array.dtype).newbyteorder("<")
    if dtype not in _CODE_FOR_DTYPE:
        raise ValueError(f"unsupported dtype for RSFT: {array.dtype}")
    array = np.ascontiguousarray(array, dtype=dtype)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, _CODE_FOR_DTYPE[dtype], array.ndim))
        fh.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        fh.write(array.tobytes())


def load_tensor(path: str | Path) -> np.ndarray:
    """Read an RSFT file back into a numpy array (bit-exact)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise VersionMismatch(f"{path}: truncated header")
    magic, version, dtype_code, rank = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise VersionMismatch(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatch(f"{path}: unsupported version {version}")
    if dtype_code not in _DTYPE_CODES:
        raise VersionMismatch(f"{path}: unknown dtype code {dtype_code}")
    dims_end = _HEADER.size + 8 * rank
    if len(raw) < dims_end:
        raise VersionMismatch(f"{path}: truncated dims")
    shape = struct.unpack_from(f"<{rank}Q", raw, _HEADER.size)
    dtype = _DTYPE_CODES[dtype_code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    payload = raw[dims_end:]
    if len(payload) != expected:
        raise VersionMismatch(
            f"{path}: payload has {len(payload)} bytes, expected {expected}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
