"""Per-view autoencoders and the mask-weighted reconstruction stage."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .data import MaskMatrix, MultiViewDataset
from .errors import StageError
from .nn import MlpSpec, ParamStore, Tensor, init_mlp, mlp_forward
from .nn.optim import adamw_step, collect_grads
from .nn.seeding import stream

DIVERGENCE_LIMIT = 1e6


class LatentStatus(IntEnum):
    ABSENT = 0
    OBSERVED = 1
    IMPUTED = 2
    ZERO_PADDED = 3


@dataclass
class TrainConfig:
    epochs: int = 150
    batch_size: int = 256
    lr: float = 1e-3
    weight_decay: float = 1e-4
    lr_schedule: str = "cosine"  # "cosine" decays to lr/20; "constant" holds lr

    def lr_at(self, epoch: int) -> float:
        if self.lr_schedule == "constant" or self.epochs <= 1:
            return self.lr
        if self.lr_schedule != "cosine":
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")
        lr_end = self.lr / 20.0
        frac = epoch / (self.epochs - 1)
        return lr_end + 0.5 * (self.lr - lr_end) * (1.0 + np.cos(np.pi * frac))


@dataclass
class ViewAutoencoder:
    """Encoder/decoder MLP pair for one view; owns its parameter store."""

    encoder: MlpSpec
    decoder: MlpSpec
    store: ParamStore

    @classmethod
    def build(cls, d_view: int, d_latent: int, hidden: list[int], rng) -> "ViewAutoencoder":
        enc = MlpSpec([d_view, *hidden, d_latent], activation="relu")
        dec = MlpSpec([d_latent, *reversed(hidden), d_view], activation="relu")
        store = ParamStore()
        init_mlp(enc, store, "enc", rng)
        init_mlp(dec, store, "dec", rng)
        return cls(encoder=enc, decoder=dec, store=store)

    @property
    def d_latent(self) -> int:
        return self.encoder.d_out

    def encode_t(self, X) -> Tensor:
        return mlp_forward(self.encoder, self.store, "enc", X)

    def decode_t(self, Z) -> Tensor:
        return mlp_forward(self.decoder, self.store, "dec", Z)

    def encode(self, X: np.ndarray) -> np.ndarray:
        """Deterministic latent representation (no gradient tracking)."""
        return self.encode_t(X).data

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        return self.decode_t(self.encode_t(X)).data


@dataclass
class LatentBank:
    """Per-view latent matrices plus the provenance of every entry."""

    Z: list[np.ndarray]
    status: np.ndarray  # (n, V) LatentStatus values

    def __post_init__(self):
        self.status = np.asarray(self.status, dtype=np.int8)
        n = self.Z[0].shape[0]
        if self.status.shape != (n, len(self.Z)):
            raise ValueError("status shape must be (n, V)")

    @property
    def n(self) -> int:
        return self.Z[0].shape[0]

    @property
    def n_views(self) -> int:
        return len(self.Z)

    def has_absent(self) -> bool:
        return bool((self.status == LatentStatus.ABSENT).any())

    def count(self, status: LatentStatus) -> int:
        return int((self.status == status).sum())

    def copy(self) -> "LatentBank":
        return LatentBank([z.copy() for z in self.Z], self.status.copy())

    def concatenated(self) -> np.ndarray:
        return np.hstack(self.Z)


def encode_observed(aes: list[ViewAutoencoder], data: MultiViewDataset, mask: MaskMatrix) -> LatentBank:
    """Encode observed view rows; unobserved entries stay zero with ABSENT status."""
    Z, status = [], np.full((data.n, data.n_views), LatentStatus.ABSENT, dtype=np.int8)
    for v, (ae, X) in enumerate(zip(aes, data.views)):
        z = np.zeros((data.n, ae.d_latent))
        rows = mask.observed_rows(v)
        if rows.size:
            z[rows] = ae.encode(X[rows])
        Z.append(z)
        status[rows, v] = LatentStatus.OBSERVED
    return LatentBank(Z=Z, status=status)


def reconstruction_loss(
    aes: list[ViewAutoencoder],
    data: MultiViewDataset,
    mask: MaskMatrix,
    rows: np.ndarray | None = None,
) -> Tensor:
    """Mask-gated squared reconstruction error, summed over views and samples.

    Rows with an unobserved view contribute exactly zero for that view, so no
    gradient reaches the autoencoder from hidden data.
    """
    total = None
    for v, (ae, X) in enumerate(zip(aes, data.views)):
        Xv = X if rows is None else X[rows]
        m = mask.M[:, v] if rows is None else mask.M[rows, v]
        recon = ae.decode_t(ae.encode_t(Xv))
        per_row = ((recon - Xv) ** 2).sum(axis=1)
        term = (per_row * m).sum()
        total = term if total is None else total + term
    return total


def train_stage1(
    aes: list[ViewAutoencoder],
    data: MultiViewDataset,
    mask: MaskMatrix,
    cfg: TrainConfig,
    seed: int = 0,
) -> list[float]:
    """Stage 1: fit every view's autoencoder on its observed rows.

    Returns the per-epoch loss curve (summed loss divided by the number of
    observed entries, for readable reporting).
    """
    n = data.n
    n_observed = mask.M.sum()
    if n_observed == 0:
        raise StageError("stage-1", "no observed view entries to train on")
    curve = []
    for epoch in range(cfg.epochs):
        order = stream(seed, "stage1", "shuffle", epoch).permutation(n)
        epoch_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            try:
                loss = reconstruction_loss(aes, data, mask, rows=batch)
                value = loss.item()
            except FloatingPointError as e:
                raise StageError("stage-1", f"divergence at epoch {epoch}: {e}") from e
            if not np.isfinite(value) or value > DIVERGENCE_LIMIT:
                raise StageError(
                    "stage-1",
                    f"divergence at epoch {epoch}: batch loss {value:.3e} "
                    f"(lr={cfg.lr}, batch={cfg.batch_size})",
                )
            epoch_sum += value
            for ae in aes:
                ae.store.zero_grad()
            loss.backward()
            for ae in aes:
                adamw_step(ae.store, collect_grads(ae.store), lr=cfg.lr_at(epoch), weight_decay=cfg.weight_decay)
        curve.append(epoch_sum / n_observed)
    return curve
