"""Binary tensor files: magic "CVST", u32 rank, u64 extents, f64 payload.

Everything is little-endian and row-major; the format round-trips any
float64 tensor and is what all CLI dump/load paths use.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .tensor import Tensor

MAGIC = b"CVST"


def save_tensor(path, array) -> None:
    arr = array.data if isinstance(array, Tensor) else np.asarray(array, dtype=np.float64)
    if arr.dtype != np.float64 or not arr.flags.c_contiguous:
        arr = np.ascontiguousarray(arr, dtype=np.float64).reshape(arr.shape)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(np.asarray(arr.shape, dtype="<u8").tobytes())
        fh.write(arr.astype("<f8", copy=False).tobytes())


def load_tensor(path) -> Tensor:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ParameterError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    (rank,) = struct.unpack_from("<I", raw, 4)
    header_end = 8 + 8 * rank
    if len(raw) < header_end:
        raise ParameterError(f"{path}: truncated header")
    extents = np.frombuffer(raw, dtype="<u8", count=rank, offset=8)
    count = int(np.prod(extents)) if rank else 1
    body = len(raw) - header_end
    if body % 8:
        raise ParameterError(f"{path}: payload is not a whole number of float64s")
    payload = np.frombuffer(raw, dtype="<f8", count=-1, offset=header_end)
    if payload.size != count:
        raise ParameterError(
            f"{path}: payload holds {payload.size} values, extents imply {count}"
        )
    data = payload.reshape(tuple(int(e) for e in extents))
    return Tensor(data, copy=True, check=False)
