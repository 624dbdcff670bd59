"""Binary checkpoint format.

Layout (all integers u32 little-endian)::

    b"SGCN1"
    tensor count
    per tensor: name length, UTF-8 name, rank, extents..., float32 LE data (row-major)
"""
import struct
from collections import OrderedDict

import numpy as np

from .errors import CheckpointError

MAGIC = b"SGCN1"


def save_checkpoint(path, tensors):
    """Write ``tensors`` (name -> array-like) to ``path``; order is preserved."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(np.asarray(arr, dtype="<f4"))
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_checkpoint(path):
    """Read a checkpoint into an ordered dict of float32 arrays."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:5] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:5]!r}")
    pos = 5

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise CheckpointError(f"{path}: truncated at byte {pos}")
        vals = struct.unpack_from(fmt, blob, pos)
        pos += size
        return vals

    (count,) = take("<I")
    out = OrderedDict()
    for _ in range(count):
        (n,) = take("<I")
        if pos + n > len(blob):
            raise CheckpointError(f"{path}: truncated name at byte {pos}")
        name = blob[pos:pos + n].decode("utf-8")
        pos += n
        (rank,) = take("<I")
        shape = take(f"<{rank}I") if rank else ()
        size = int(np.prod(shape)) if rank else 1
        nbytes = 4 * size
        if pos + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated data for {name}")
        arr = np.frombuffer(blob, dtype="<f4", count=size, offset=pos).reshape(shape).astype(np.float32)
        pos += nbytes
        out[name] = arr
    if pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - pos} trailing bytes")
    return out
