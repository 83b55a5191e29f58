"""IDX image/label file parsing (big-endian magic + dims + u8 payload)."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803  # u8 payload, 3 dims (count, rows, cols)
LABEL_MAGIC = 0x00000801  # u8 payload, 1 dim


class IdxError(ValueError):
    pass


def read_idx(path) -> np.ndarray:
    """Raw u8 tensor in its on-disk shape (images 3-D, labels 1-D)."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise IdxError(f"{path}: too short for an IDX header")
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic == LABEL_MAGIC:
        ndim = 1
    elif magic == IMAGE_MAGIC:
        ndim = 3
    else:
        raise IdxError(f"{path}: unsupported IDX magic 0x{magic:08X}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxError(f"{path}: truncated IDX dimension header")
    dims = struct.unpack_from(">" + "I" * ndim, raw, 4)
    count = int(np.prod([int(d) for d in dims], dtype=np.int64))
    if count < 0 or count > 2**40:
        raise IdxError(f"{path}: IDX dimensions overflow ({dims})")
    payload = raw[header:]
    if len(payload) != count:
        raise IdxError(
            f"{path}: payload holds {len(payload)} bytes, header promises {count}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims).copy()


def write_idx(path, arr: np.ndarray) -> None:
    """Write a u8 tensor: 1-D arrays as label files, 3-D as image files."""
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise IdxError("IDX writer takes uint8 arrays")
    if arr.ndim == 1:
        magic = LABEL_MAGIC
    elif arr.ndim == 3:
        magic = IMAGE_MAGIC
    else:
        raise IdxError("IDX writer supports 1-D labels or 3-D images")
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for d in arr.shape:
            f.write(struct.pack(">I", d))
        f.write(arr.tobytes())


def load_idx(path) -> np.ndarray:
    """Feature matrix from an IDX file: images flatten to n x (rows*cols)
    scaled into [0, 1]; label files yield a length-n vector."""
    arr = read_idx(path)
    if arr.ndim == 1:
        return arr.astype(np.float64)
    n = arr.shape[0]
    return arr.reshape(n, -1).astype(np.float64) / 255.0
