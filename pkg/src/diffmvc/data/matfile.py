"""Flat binary matrix files, format "imvcdc-mat-v1".

Layout: 8-byte ASCII tag, u64 LE row count, u64 LE column count, then
n*d little-endian f64 values in row-major order.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

# the v1 format reserves exactly 8 tag bytes
TAG = b"IMVCMAT1"


class MatrixFormatError(ValueError):
    pass


def save_matrix(path, X: np.ndarray) -> None:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise MatrixFormatError("matrix files hold 2-D arrays")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(TAG)
        f.write(struct.pack("<QQ", X.shape[0], X.shape[1]))
        f.write(np.ascontiguousarray(X, dtype="<f8").tobytes())


def load_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 24 or raw[:8] != TAG:
        raise MatrixFormatError(f"{path}: missing imvcdc-mat-v1 tag")
    n, d = struct.unpack_from("<QQ", raw, 8)
    expected = 24 + 8 * n * d
    if len(raw) != expected:
        raise MatrixFormatError(
            f"{path}: header promises {n}x{d} values, file holds "
            f"{(len(raw) - 24) // 8}"
        )
    return np.frombuffer(raw, dtype="<f8", offset=24).reshape(n, d).astype(np.float64)
