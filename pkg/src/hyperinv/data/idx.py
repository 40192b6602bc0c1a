"""IDX (MNIST/KMNIST) reading and writing.

Layout (big endian): two zero bytes, a type byte (0x08 = unsigned byte), a
dimension-count byte, one uint32 per dimension, then the payload.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxError(ValueError):
    pass


def _read(path, magic, ndim):
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise IdxError(f"{path}: truncated header at byte offset {len(raw)} (need 4 bytes of magic)")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise IdxError(f"{path}: bad magic 0x{found:08x} at byte offset 0, expected 0x{magic:08x}")
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise IdxError(f"{path}: truncated dimension header at byte offset {len(raw)}, need {header_end}")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    count = int(np.prod(dims))
    payload = len(raw) - header_end
    if payload != count:
        where = header_end + min(payload, count)
        raise IdxError(
            f"{path}: payload holds {payload} bytes but dimensions {dims} need {count} (mismatch at byte offset {where})"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header_end).reshape(dims)


def load_idx_images(path):
    """[N,1,rows,cols] float64 in [0,1]."""
    arr = _read(path, IMAGE_MAGIC, 3)
    return (arr.astype(np.float64) / 255.0)[:, None, :, :]


def load_idx_labels(path):
    return _read(path, LABEL_MAGIC, 1).astype(np.int64)


def write_idx(path, array):
    """Write a uint8-valued array; 1-d arrays get the label magic, 3-d the image magic."""
    array = np.asarray(array)
    if array.ndim == 4 and array.shape[1] == 1:
        array = array[:, 0]
    if array.ndim not in (1, 3):
        raise IdxError(f"IDX writer handles 1-d labels or [N,rows,cols] images, got shape {array.shape}")
    if np.issubdtype(array.dtype, np.floating):
        array = np.rint(array * 255.0)
    if array.min(initial=0) < 0 or array.max(initial=0) > 255:
        raise IdxError("IDX values must fit in an unsigned byte")
    magic = LABEL_MAGIC if array.ndim == 1 else IMAGE_MAGIC
    header = struct.pack(f">I{array.ndim}I", magic, *array.shape)
    Path(path).write_bytes(header + array.astype(np.uint8).tobytes())
