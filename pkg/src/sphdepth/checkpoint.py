"""Binary checkpoint files.

Layout (all integers little-endian)::

    b"SDCK" | version:u32 | count:u32
    count x [ name_len:u32 | name:utf-8 | rank:u32 | extents:u64*rank | float64 LE values ]
"""
from __future__ import annotations

import struct

import numpy as np

from .errors import CheckpointError

MAGIC = b"SDCK"
VERSION = 1


def save_checkpoint(path, arrays: dict) -> None:
    """Write named arrays in insertion order."""
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(arrays)))
        for name, arr in arrays.items():
            a = np.asarray(arr, dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)) + raw)
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
            fh.write(a.tobytes(order="C"))


def load_checkpoint(path) -> dict:
    """Read a checkpoint back into an ordered ``name -> float64 array`` dict."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 12 or buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {VERSION}")
    pos, out = 12, {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}Q", buf, pos)
            pos += 8 * rank
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * size > len(buf):
                raise CheckpointError(f"{path}: truncated record {name!r}")
            out[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * size
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated checkpoint") from exc
    return out
