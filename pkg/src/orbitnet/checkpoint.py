"""Versioned binary container for named float64 tensors.

Layout (all integers little-endian):

    offset  size  field
    0       8     magic b"ORBITCK1"
    8       4     format version (uint32, currently 1)
    12      4     tensor count (uint32)
    then per tensor:
            2     name length L (uint16)
            L     name, UTF-8
            1     ndim (uint8)
            4*nd  extents (uint32 each)
            8*n   payload, float64 little-endian, C order

Tensors restore in file order; names must be unique.
"""

import struct

import numpy as np

MAGIC = b"ORBITCK1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, arrays):
    """Write a dict of name -> array (converted to float64)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for extent in arr.shape:
                fh.write(struct.pack("<I", extent))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Read a checkpoint back into a dict of name -> float64 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise CheckpointError(
            f"{path}: format version {version}, this build reads {VERSION}")
    arrays = {}
    offset = 16
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        name = data[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", data, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", data, offset) if ndim else ()
        offset += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        end = offset + 8 * size
        if end > len(data):
            raise CheckpointError(
                f"{path}: tensor {name!r} payload runs past end of file")
        arrays[name] = np.frombuffer(
            data, dtype="<f8", count=size, offset=offset).reshape(shape).copy()
        offset = end
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    return arrays
