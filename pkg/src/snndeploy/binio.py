"""Packed binary tensor records used by the ``.weights.bin`` sidecar.

Each record is a 16-byte little-endian header followed by the raw tensor
data in row-major order:

    offset  size  field
    0       4     magic ``b"SNNT"``
    4       1     dtype code (0 = float32, 1 = int8, 2 = int32)
    5       1     rank (1..4)
    6       2     reserved (zero)
    8       8     dims, 4 x uint16 (unused trailing dims are 1)

Multiple records may be concatenated in one file; consumers address them
by byte offset.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SNNT"
_HEADER = struct.Struct("<4sBBH4H")

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("i1"), 2: np.dtype("<i4")}
_CODE_FOR_DTYPE = {np.dtype("float32"): 0, np.dtype("int8"): 1, np.dtype("int32"): 2}


def write_tensor(buf, arr: np.ndarray) -> int:
    """Append one tensor record to a binary stream; returns its byte offset."""
    arr = np.ascontiguousarray(arr)
    if arr.dtype not in _CODE_FOR_DTYPE:
        if np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        elif np.issubdtype(arr.dtype, np.integer):
            arr = arr.astype(np.int32)
        else:
            raise ValueError(f"unsupported tensor dtype {arr.dtype}")
    if arr.ndim < 1 or arr.ndim > 4:
        raise ValueError(f"rank {arr.ndim} outside supported range 1..4")
    if any(d > 0xFFFF for d in arr.shape):
        raise ValueError(f"dimension too large for header: {arr.shape}")
    dims = list(arr.shape) + [1] * (4 - arr.ndim)
    offset = buf.tell()
    buf.write(_HEADER.pack(MAGIC, _CODE_FOR_DTYPE[arr.dtype], arr.ndim, 0, *dims))
    buf.write(arr.tobytes())
    return offset


def read_tensor(buf, offset: int | None = None) -> np.ndarray:
    """Read one tensor record, optionally seeking to ``offset`` first."""
    if offset is not None:
        buf.seek(offset)
    header = buf.read(_HEADER.size)
    if len(header) != _HEADER.size:
        raise ValueError("truncated tensor header")
    magic, code, rank, _, *dims = _HEADER.unpack(header)
    if magic != MAGIC:
        raise ValueError(f"bad tensor magic {magic!r}")
    if code not in _DTYPE_CODES:
        raise ValueError(f"unknown dtype code {code}")
    if not 1 <= rank <= 4:
        raise ValueError(f"bad tensor rank {rank}")
    shape = tuple(dims[:rank])
    dtype = _DTYPE_CODES[code]
    n = int(np.prod(shape))
    raw = buf.read(n * dtype.itemsize)
    if len(raw) != n * dtype.itemsize:
        raise ValueError("truncated tensor data")
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
