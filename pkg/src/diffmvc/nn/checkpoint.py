"""Flat binary parameter checkpoints (format tag: imvcdc-ckpt-v1).

Layout, all integers little-endian:
    b"imvcdc-ckpt-v1\\n"
    u64 step counter, u64 parameter count
    per parameter (name-sorted): u32 name length, utf-8 name,
        u32 ndim, ndim * u64 dims, little-endian f64 payload
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .params import ParamStore

HEADER = b"imvcdc-ckpt-v1\n"


class CheckpointError(Exception):
    pass


def save_checkpoint(path, store: ParamStore) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(HEADER)
        f.write(struct.pack("<QQ", store.step_count, len(store.names())))
        for name, p in store.items():
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", p.data.ndim))
            for dim in p.data.shape:
                f.write(struct.pack("<Q", dim))
            f.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], int]:
    """Returns (name -> array, step counter)."""
    path = Path(path)
    data = path.read_bytes()
    if not data.startswith(HEADER):
        raise CheckpointError(f"{path}: bad checkpoint header")
    off = len(HEADER)

    def take(fmt: str):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = struct.unpack_from(fmt, data, off)
        off += size
        return out

    step, count = take("<QQ")
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = take("<I")
        if off + name_len > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = take("<I")
        shape = tuple(take("<" + "Q" * ndim)) if ndim else ()
        n = int(np.prod(shape)) if shape else 1
        nbytes = 8 * n
        if off + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated payload for {name!r}")
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape)
        params[name] = arr.astype(np.float64)
        off += nbytes
    if off != len(data):
        raise CheckpointError(f"{path}: trailing bytes after payload")
    return params, int(step)


def restore_into(path, store: ParamStore) -> None:
    values, step = load_checkpoint(path)
    store.load_values(values, step=step)
