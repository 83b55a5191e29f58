"""Conditional latent diffusion: forward noising, epsilon-prediction denoisers
with cross-attention on the companion view's latent, ancestral sampling, and
the missing-latent imputation stage."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autoencoder import DIVERGENCE_LIMIT, LatentBank, LatentStatus, TrainConfig
from .data import MaskMatrix
from .errors import StageError
from .nn import AttentionBlock, ParamStore, Tensor, attention, init_attention
from .nn.layers import init_weight
from .nn.optim import adamw_step, collect_grads
from .nn.seeding import stream


@dataclass
class DiffusionConfig:
    timesteps: int = 200
    beta_min: float = 1e-4
    beta_max: float = 0.02
    schedule: str = "linear"
    n_tokens: int = 4  # latent reshaped to this many tokens for cross-attention
    d_token: int = 16
    d_time: int = 32


@dataclass
class NoiseSchedule:
    """beta_t / alpha_t / alpha_bar_t tables, 1-indexed timesteps t in [1, T]."""

    betas: np.ndarray

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64)
        if self.betas.ndim != 1 or self.betas.size < 1:
            raise ValueError("need at least one timestep")
        if not ((self.betas > 0) & (self.betas < 1)).all():
            raise ValueError("betas must lie strictly inside (0, 1)")
        self.alphas = 1.0 - self.betas
        self.alpha_bars = np.cumprod(self.alphas)

    @property
    def T(self) -> int:
        return self.betas.size

    def alpha_bar(self, t) -> np.ndarray:
        return self.alpha_bars[np.asarray(t) - 1]


def build_schedule(cfg: DiffusionConfig) -> NoiseSchedule:
    if cfg.timesteps < 1:
        raise ValueError("timesteps must be >= 1")
    if not 0.0 < cfg.beta_min <= cfg.beta_max < 1.0:
        raise ValueError("need 0 < beta_min <= beta_max < 1")
    if cfg.schedule != "linear":
        raise ValueError(f"unknown schedule kind {cfg.schedule!r}")
    betas = np.linspace(cfg.beta_min, cfg.beta_max, cfg.timesteps)
    return NoiseSchedule(betas=betas)


def forward_noising(z0: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Closed-form q(z_t | z_0): sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.

    `t` may be a scalar or a per-row vector of timesteps in [1, T].
    """
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != z0.shape:
        raise ValueError("eps must match z0's shape")
    t_arr = np.asarray(t)
    if (t_arr < 1).any() or (t_arr > sched.T).any():
        raise ValueError(f"timestep outside [1, {sched.T}]")
    ab = sched.alpha_bar(t_arr)
    if t_arr.ndim == 1:
        ab = ab[:, None]
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def sinusoidal_embedding(t, d: int, max_period: float = 10_000.0) -> np.ndarray:
    """Standard sin/cos timestep features, shape (n, d)."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = d // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half)
    args = t_arr[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if d % 2:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=1)
    return emb


class DenoiserNet:
    """Epsilon-prediction net for one completion direction.

    The noisy latent (plus a time embedding) is projected to n_tokens tokens;
    cross-attention over tokens of the companion view's clean latent injects
    the condition; a residual gelu trunk and a linear head emit eps-hat.
    """

    def __init__(self, d_latent: int, cfg: DiffusionConfig, direction: str, seed_rng):
        self.d_latent = d_latent
        self.cfg = cfg
        self.direction = direction  # "to_view{v}" tag, purely informational
        self.trained = False
        self.width = cfg.n_tokens * cfg.d_token
        self.store = ParamStore()
        self.attn = AttentionBlock(
            "attn", d_query=cfg.d_token, d_context=cfg.d_token, d=cfg.d_token
        )
        rng = seed_rng
        w = self.width
        add = self.store.add
        add("in/W", init_weight(rng, d_latent, w, he=False))
        add("in/b", np.zeros(w))
        add("time/W", init_weight(rng, cfg.d_time, w, he=False))
        add("time/b", np.zeros(w))
        add("cond/W", init_weight(rng, d_latent, w, he=False))
        add("cond/b", np.zeros(w))
        init_attention(self.attn, self.store, rng)
        add("trunk/W0", init_weight(rng, w, w, he=True))
        add("trunk/b0", rng.uniform(-1.0 / np.sqrt(w), 1.0 / np.sqrt(w), size=w))
        add("trunk/W1", init_weight(rng, w, w, he=False))
        add("trunk/b1", np.zeros(w))
        add("out/W", init_weight(rng, w, d_latent, he=False))
        add("out/b", np.zeros(d_latent))

    def predict_eps_t(self, z_t, t, z_cond) -> Tensor:
        """Graph-building forward pass; t is a scalar or per-row vector."""
        if not isinstance(z_t, Tensor):
            z_t = Tensor.const(z_t)
        if not isinstance(z_cond, Tensor):
            z_cond = Tensor.const(z_cond)
        n = z_t.shape[0]
        t_arr = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
        temb = Tensor.const(sinusoidal_embedding(t_arr, self.cfg.d_time))
        s = self.store
        h, d_tok = self.cfg.n_tokens, self.cfg.d_token

        u0 = (z_t @ s["in/W"] + s["in/b"]) + (temb @ s["time/W"] + s["time/b"])
        q_tokens = u0.reshape(n, h, d_tok)
        ctx = (z_cond @ s["cond/W"] + s["cond/b"]).reshape(n, h, d_tok)
        mixed = attention(self.attn, s, q_tokens, ctx)
        u1 = u0 + mixed.reshape(n, self.width)
        u2 = u1 + ((u1 @ s["trunk/W0"] + s["trunk/b0"]).gelu() @ s["trunk/W1"] + s["trunk/b1"])
        return u2 @ s["out/W"] + s["out/b"]

    def predict_eps(self, z_t: np.ndarray, t, z_cond: np.ndarray) -> np.ndarray:
        return self.predict_eps_t(z_t, t, z_cond).data


def diffusion_loss_frozen(
    net: DenoiserNet,
    z_src: np.ndarray,
    z_cond: np.ndarray,
    t: np.ndarray,
    eps: np.ndarray,
    sched: NoiseSchedule,
) -> Tensor:
    """Denoising loss with fixed (t, eps) draws: mean per-row squared norm of
    eps - eps_hat(z_t, t, z_cond)."""
    z_t = forward_noising(z_src, t, eps, sched)
    pred = net.predict_eps_t(z_t, t, z_cond)
    diff = pred - eps
    return (diff**2).sum() * (1.0 / z_src.shape[0])


def diffusion_loss(
    net: DenoiserNet,
    z_src: np.ndarray,
    z_cond: np.ndarray,
    sched: NoiseSchedule,
    rng: np.random.Generator,
) -> Tensor:
    """Samples t ~ U{1..T} and eps ~ N(0, I) per row, then the frozen loss."""
    n = z_src.shape[0]
    if n == 0:
        raise StageError("stage-2", "no complete rows to train the denoiser on")
    t = rng.integers(1, sched.T + 1, size=n)
    eps = rng.standard_normal(z_src.shape)
    return diffusion_loss_frozen(net, z_src, z_cond, t, eps, sched)


def conditional_denoise_step(
    net: DenoiserNet,
    z_t: np.ndarray,
    t: int,
    z_cond: np.ndarray,
    sched: NoiseSchedule,
    rng: np.random.Generator | None,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """One ancestral step z_t -> z_{t-1} with sigma_t^2 = beta_t and a
    deterministic final step (sigma_1 = 0). `rng=None` forces sigma_t = 0 at
    every step; `noise` supplies the xi draw explicitly."""
    if not 1 <= t <= sched.T:
        raise ValueError(f"timestep {t} outside [1, {sched.T}]")
    a_t = sched.alphas[t - 1]
    ab_t = sched.alpha_bars[t - 1]
    eps_hat = net.predict_eps(z_t, t, z_cond)
    mean = (z_t - ((1.0 - a_t) / np.sqrt(1.0 - ab_t)) * eps_hat) / np.sqrt(a_t)
    if t == 1 or (rng is None and noise is None):
        return mean
    xi = noise if noise is not None else rng.standard_normal(z_t.shape)
    return mean + np.sqrt(sched.betas[t - 1]) * xi


def sample_latents(
    net: DenoiserNet,
    z_cond: np.ndarray,
    sched: NoiseSchedule,
    noise: np.ndarray,
) -> np.ndarray:
    """Full reverse chain from supplied noise draws.

    noise[:, 0] seeds z_T; noise[:, j] is the xi for the step at t = T - j + 1.
    The t = 1 step injects none (its slot is unused).
    """
    n, steps, d = noise.shape
    if steps != sched.T + 1 or d != net.d_latent:
        raise ValueError("noise must have shape (n, T + 1, d_latent)")
    z = noise[:, 0, :].copy()
    for t in range(sched.T, 0, -1):
        z = conditional_denoise_step(net, z, t, z_cond, sched, rng=None, noise=noise[:, sched.T - t + 1, :] if t > 1 else None)
    return z


def imputation_noise(seed: int, view: int, rows: np.ndarray, T: int, d: int) -> np.ndarray:
    """Per-row noise stacks; each row owns the stream (seed, 'impute', view, row),
    so results do not depend on batch composition."""
    out = np.empty((rows.size, T + 1, d))
    for j, row in enumerate(rows):
        out[j] = stream(seed, "impute", view, int(row)).standard_normal((T + 1, d))
    return out


def impute_missing(
    nets: dict[int, DenoiserNet],
    bank: LatentBank,
    mask: MaskMatrix,
    sched: NoiseSchedule,
    seed: int = 0,
) -> LatentBank:
    """Fill every ABSENT latent by ancestral sampling conditioned on the
    companion view's observed latent. Observed entries are never modified."""
    if bank.n_views != 2:
        raise StageError("stage-2", "imputation currently supports exactly two views")
    out = bank.copy()
    for v in range(2):
        rows = mask.missing_rows(v)
        if rows.size == 0:
            continue
        net = nets[v]
        if not net.trained:
            raise StageError("stage-2", f"denoiser for view {v} is untrained")
        other = 1 - v
        if (bank.status[rows, other] == LatentStatus.ABSENT).any():
            raise StageError("stage-2", "row with no observed view cannot be imputed")
        noise = imputation_noise(seed, v, rows, sched.T, net.d_latent)
        z = sample_latents(net, bank.Z[other][rows], sched, noise)
        out.Z[v][rows] = z
        out.status[rows, v] = LatentStatus.IMPUTED
    return out


def train_stage2(
    nets: dict[int, DenoiserNet],
    bank: LatentBank,
    mask: MaskMatrix,
    sched: NoiseSchedule,
    cfg: TrainConfig,
    seed: int = 0,
) -> dict[int, list[float]]:
    """Stage 2: train both direction nets on rows where every view is observed.

    Returns per-target-view epoch loss curves.
    """
    complete = mask.complete_rows()
    if complete.size < 1:
        raise StageError("stage-2", "need at least one complete row to train the denoiser")
    curves: dict[int, list[float]] = {v: [] for v in nets}
    for epoch in range(cfg.epochs):
        order = complete[stream(seed, "stage2", "shuffle", epoch).permutation(complete.size)]
        sums = {v: 0.0 for v in nets}
        n_batches = 0
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            n_batches += 1
            for v, net in nets.items():
                rng = stream(seed, "stage2", "draws", epoch, start, v)
                try:
                    loss = diffusion_loss(net, bank.Z[v][batch], bank.Z[1 - v][batch], sched, rng)
                    value = loss.item()
                except FloatingPointError as e:
                    raise StageError("stage-2", f"divergence at epoch {epoch}: {e}") from e
                if not np.isfinite(value) or value > DIVERGENCE_LIMIT:
                    raise StageError(
                        "stage-2", f"divergence at epoch {epoch}: loss {value:.3e}"
                    )
                sums[v] += value
                net.store.zero_grad()
                loss.backward()
                adamw_step(net.store, collect_grads(net.store), lr=cfg.lr_at(epoch), weight_decay=cfg.weight_decay)
        for v in nets:
            curves[v].append(sums[v] / n_batches)
    for net in nets.values():
        net.trained = True
    return curves
