"""Named parameter store with per-parameter optimizer moments."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


class ParamStore:
    """Flat name -> parameter map plus AdamW moment buffers and a step counter.

    Single-writer: one optimizer owns the store during training; moment
    buffers are always shape-congruent with their parameters.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already registered")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        return ((n, self._params[n]) for n in self.names())

    def moments(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        return self._m[name], self._v[name]

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def n_values(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def state_hash(self) -> str:
        """Order-stable digest of all parameter bytes (stage-isolation checks)."""
        import hashlib

        h = hashlib.sha256()
        for name in self.names():
            h.update(name.encode())
            h.update(np.ascontiguousarray(self._params[name].data).tobytes())
        return h.hexdigest()

    def copy_values(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray], step: int | None = None) -> None:
        for name, arr in values.items():
            if name not in self._params:
                raise KeyError(f"unknown parameter {name!r}")
            p = self._params[name]
            if p.data.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name!r}: {p.data.shape} vs {arr.shape}")
            p.data = np.asarray(arr, dtype=np.float64).copy()
        if step is not None:
            self.step_count = int(step)
