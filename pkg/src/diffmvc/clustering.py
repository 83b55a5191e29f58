"""Contrastive clustering heads: view-specific projections into a shared
trunk, a unit-norm feature head and a softmax assignment head, the two
contrastive losses, and the fused argmax prediction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autoencoder import DIVERGENCE_LIMIT, LatentBank, TrainConfig
from .errors import StageError
from .nn import MlpSpec, ParamStore, Tensor, init_mlp, mlp_forward
from .nn.optim import adamw_step, collect_grads
from .nn.seeding import stream


@dataclass
class HeadConfig:
    k: int = 4
    d_mid: int = 64
    d_feature: int = 32
    tau: float = 0.5  # temperature for the category contrast

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("need k >= 2 clusters")
        if self.tau <= 0:
            raise ValueError("temperature must be positive")


class ClusterHeads:
    """Per-view MLP -> shared trunk -> (feature head H, assignment head Y)."""

    def __init__(self, d_latent: int, cfg: HeadConfig, n_views: int, seed_rng):
        self.cfg = cfg
        self.n_views = n_views
        self.store = ParamStore()
        self.view_specs = [
            MlpSpec([d_latent, cfg.d_mid], activation="relu") for _ in range(n_views)
        ]
        self.trunk_spec = MlpSpec([cfg.d_mid, cfg.d_mid, cfg.d_mid], activation="relu")
        self.feature_spec = MlpSpec([cfg.d_mid, cfg.d_feature], output_activation="l2norm")
        self.assign_spec = MlpSpec([cfg.d_mid, cfg.k], output_activation="softmax")
        for v, spec in enumerate(self.view_specs):
            init_mlp(spec, self.store, f"view{v}", seed_rng)
        init_mlp(self.trunk_spec, self.store, "trunk", seed_rng)
        init_mlp(self.feature_spec, self.store, "feature", seed_rng)
        init_mlp(self.assign_spec, self.store, "assign", seed_rng)

    def forward_t(self, z, view: int) -> tuple[Tensor, Tensor]:
        """(H, Y) for one view's latents; rows of H are unit-norm, rows of Y
        sum to one."""
        x = mlp_forward(self.view_specs[view], self.store, f"view{view}", z)
        shared = mlp_forward(self.trunk_spec, self.store, "trunk", x)
        H = mlp_forward(self.feature_spec, self.store, "feature", shared)
        Y = mlp_forward(self.assign_spec, self.store, "assign", shared)
        return H, Y

    def forward(self, z: np.ndarray, view: int) -> tuple[np.ndarray, np.ndarray]:
        H, Y = self.forward_t(z, view)
        return H.data, Y.data

    def assignments(self, bank: LatentBank) -> list[np.ndarray]:
        return [self.forward(bank.Z[v], v)[1] for v in range(self.n_views)]


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor.const(x)


def spectral_loss(H1, H2) -> Tensor:
    """Cross-view spectral contrast on unit-norm rows:
    -(2/n) sum_i H1_i . H2_i + (1/(n(n-1))) sum_{i != j} (H1_i . H2_j)^2."""
    H1, H2 = _as_tensor(H1), _as_tensor(H2)
    n = H1.shape[0]
    if n < 2:
        raise ValueError("spectral loss needs n >= 2 rows")
    G = H1 @ H2.transpose_last()  # (n, n) cross-view similarities
    eye = Tensor.const(np.eye(n))
    positive = (G * eye).sum() * (-2.0 / n)
    negative = ((G * (1.0 - eye)) ** 2).sum() * (1.0 / (n * (n - 1)))
    return positive + negative


def category_loss(Y1, Y2, tau: float = 0.5) -> Tensor:
    """Cluster-level contrast across views plus an assignment entropy term.

    Columns of each assignment matrix are l2-normalized; similarities are
    scaled by 1/tau. The entropy term sum_m sum_j p_j log p_j (p = batch mean
    assignment) is minimized at the uniform distribution, discouraging
    cluster collapse.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    Y1, Y2 = _as_tensor(Y1), _as_tensor(Y2)
    n, k = Y1.shape
    q1 = Y1.transpose_last().l2_normalize(axis=-1)  # (k, n) rows = normalized columns
    q2 = Y2.transpose_last().l2_normalize(axis=-1)
    s11 = (q1 @ q1.transpose_last()) * (1.0 / tau)
    s22 = (q2 @ q2.transpose_last()) * (1.0 / tau)
    s12 = (q1 @ q2.transpose_last()) * (1.0 / tau)

    eye = Tensor.const(np.eye(k))
    off = 1.0 - eye
    pos = (s12 * eye).sum(axis=1)  # s(q_j^1, q_j^2)
    den1 = ((s11.exp() * off).sum(axis=1)).log()
    den2 = ((s22.exp() * off).sum(axis=1)).log()
    contrast = ((pos - den1) + (pos - den2)).sum() * (-1.0 / k)

    return contrast + assignment_entropy(Y1, Y2)


def assignment_entropy(Y1, Y2) -> Tensor:
    """sum_m sum_j p_j log p_j with p the mean assignment per cluster; 0 at
    full collapse (its maximum), -2 log k at uniform assignments."""
    total = None
    for Y in (_as_tensor(Y1), _as_tensor(Y2)):
        p = Y.mean(axis=0)
        term = p.xlogx().sum()
        total = term if total is None else total + term
    return total


def clustering_loss(H1, H2, Y1, Y2, tau: float = 0.5) -> Tensor:
    """Total stage-3 objective: spectral + category losses."""
    return spectral_loss(H1, H2) + category_loss(Y1, Y2, tau=tau)


def predict(Y1: np.ndarray, Y2: np.ndarray) -> np.ndarray:
    """Fused assignment: per-row argmax of Y1 + Y2, lowest index on ties."""
    Y1, Y2 = np.asarray(Y1), np.asarray(Y2)
    if Y1.shape != Y2.shape:
        raise ValueError("assignment matrices must share a shape")
    return (Y1 + Y2).argmax(axis=1).astype(np.int64)


def train_stage3(
    heads: ClusterHeads,
    bank: LatentBank,
    cfg: TrainConfig,
    seed: int = 0,
    tau: float | None = None,
) -> list[float]:
    """Stage 3: fit all head layers on the completed latent bank (observed +
    imputed rows together). Returns the per-epoch mean batch loss."""
    if bank.has_absent():
        raise StageError("stage-3", "latent bank still has absent entries")
    if bank.n_views != 2:
        raise StageError("stage-3", "clustering heads expect two views")
    tau = heads.cfg.tau if tau is None else tau
    n = bank.n
    curve = []
    for epoch in range(cfg.epochs):
        order = stream(seed, "stage3", "shuffle", epoch).permutation(n)
        epoch_sum = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            if batch.size < 2:
                continue  # contrastive terms need at least two rows
            try:
                H1, Y1 = heads.forward_t(bank.Z[0][batch], view=0)
                H2, Y2 = heads.forward_t(bank.Z[1][batch], view=1)
                loss = clustering_loss(H1, H2, Y1, Y2, tau=tau)
                value = loss.item()
            except FloatingPointError as e:
                raise StageError("stage-3", f"divergence at epoch {epoch}: {e}") from e
            if not np.isfinite(value) or value > DIVERGENCE_LIMIT:
                raise StageError("stage-3", f"divergence at epoch {epoch}: loss {value:.3e}")
            epoch_sum += value
            n_batches += 1
            heads.store.zero_grad()
            loss.backward()
            adamw_step(heads.store, collect_grads(heads.store), lr=cfg.lr_at(epoch), weight_decay=cfg.weight_decay)
        curve.append(epoch_sum / max(1, n_batches))
    return curve
