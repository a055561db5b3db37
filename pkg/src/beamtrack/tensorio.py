"""Binary tensor container.

Layout (all little-endian)::

    0..3    magic b"BTTN"
    4       u8 rank
    5       u8 dtype code (1 int8, 2 float32, 3 float64)
    6..7    reserved, zero
    8..15   u64 element count
    16..    rank x u32 dims
    ...     row-major payload
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"BTTN"
_HEADER = struct.Struct("<4sBBHQ")
DTYPE_CODES = {np.dtype("int8"): 1, np.dtype("float32"): 2, np.dtype("float64"): 3}
CODE_DTYPES = {v: k for k, v in DTYPE_CODES.items()}


def encode_blob(array: np.ndarray) -> bytes:
    a = np.asarray(array)
    if a.dtype not in DTYPE_CODES:
        raise TypeError(f"unsupported dtype {a.dtype}")
    if a.ndim > 255:
        raise ValueError("rank too large")
    header = _HEADER.pack(MAGIC, a.ndim, DTYPE_CODES[a.dtype], 0, a.size)
    dims = struct.pack(f"<{a.ndim}I", *a.shape)
    payload = np.ascontiguousarray(a).astype(a.dtype.newbyteorder("<"), copy=False).tobytes()
    return header + dims + payload


def decode_blob(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise ValueError("truncated header")
    magic, rank, code, _, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if code not in CODE_DTYPES:
        raise ValueError(f"unknown dtype code {code}")
    off = _HEADER.size
    dims = struct.unpack_from(f"<{rank}I", data, off)
    off += 4 * rank
    dtype = CODE_DTYPES[code].newbyteorder("<")
    if int(np.prod(dims, dtype=np.int64)) != count or len(data) - off != count * dtype.itemsize:
        raise ValueError("payload size does not match header")
    return np.frombuffer(data, dtype=dtype, count=count, offset=off).reshape(dims).astype(dtype.newbyteorder("="))


def write_blob(path, array: np.ndarray) -> None:
    Path(path).write_bytes(encode_blob(array))


def read_blob(path) -> np.ndarray:
    return decode_blob(Path(path).read_bytes())
