"""Multi-view dataset container, observability masks, zero-padding baseline."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn.seeding import stream


@dataclass
class MultiViewDataset:
    """Per-view feature matrices with optional ground-truth labels.

    All views share the row count; the pipeline currently exercises V = 2.
    """

    views: list[np.ndarray]
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.views = [np.asarray(v, dtype=np.float64) for v in self.views]
        if len(self.views) < 2:
            raise ValueError("need at least two views")
        n = self.views[0].shape[0]
        if any(v.ndim != 2 or v.shape[0] != n for v in self.views):
            raise ValueError("views must be 2-D with identical row counts")
        for v in self.views:
            if not np.isfinite(v).all():
                raise ValueError("non-finite feature values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise ValueError("labels must be a length-n vector")

    @property
    def n(self) -> int:
        return self.views[0].shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)

    def view_dims(self) -> list[int]:
        return [v.shape[1] for v in self.views]


@dataclass
class MaskMatrix:
    """Binary observability matrix: M[i, v] = 1 iff view v of sample i is observed.

    Every row keeps at least one observed view; the fraction of rows with a
    missing view is the missing rate eta.
    """

    M: np.ndarray
    eta: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=np.float64)
        if self.M.ndim != 2:
            raise ValueError("mask must be n x V")
        if not np.isin(self.M, (0.0, 1.0)).all():
            raise ValueError("mask entries must be 0 or 1")
        if self.M.shape[0] > 0 and self.M.sum(axis=1).min() < 1:
            raise ValueError("every sample needs at least one observed view")
        if self.eta is None:
            n = self.M.shape[0]
            self.eta = float((self.M.min(axis=1) == 0).sum() / n) if n else 0.0

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def incomplete_rows(self) -> np.ndarray:
        return np.flatnonzero(self.M.min(axis=1) == 0)

    def complete_rows(self) -> np.ndarray:
        return np.flatnonzero(self.M.min(axis=1) == 1)

    def missing_rows(self, view: int) -> np.ndarray:
        return np.flatnonzero(self.M[:, view] == 0)

    def observed_rows(self, view: int) -> np.ndarray:
        return np.flatnonzero(self.M[:, view] == 1)


def generate_mask(n: int, V: int = 2, eta: float = 0.5, seed: int = 0) -> MaskMatrix:
    """Sample an observability mask with round(eta*n) incomplete rows.

    Each incomplete row loses exactly one view; the lost view cycles over the
    selected rows so per-view missing counts balance within 1.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"missing rate eta={eta} outside [0, 1]")
    if V < 2:
        raise ValueError("need at least two views")
    n_incomplete = int(round(eta * n))
    M = np.ones((n, V))
    rng = stream(seed, "mask")
    chosen = np.sort(rng.permutation(n)[:n_incomplete])
    for idx, row in enumerate(chosen):
        M[row, idx % V] = 0.0
    return MaskMatrix(M=M, eta=eta)


def apply_zero_padding(data: MultiViewDataset, mask: MaskMatrix) -> MultiViewDataset:
    """Replace unobserved view rows by zero vectors (imputation-free baseline)."""
    if mask.M.shape != (data.n, data.n_views):
        raise ValueError("mask shape does not match dataset")
    views = []
    for v, X in enumerate(data.views):
        padded = X.copy()
        padded[mask.M[:, v] == 0] = 0.0
        views.append(padded)
    return MultiViewDataset(views=views, labels=data.labels)
