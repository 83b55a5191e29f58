"""Two-view synthetic datasets: simplex cluster centers, linear view maps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn.seeding import stream
from .dataset import MultiViewDataset


@dataclass
class SyntheticSpec:
    """Generator knobs. Cluster centers sit on a scaled regular simplex so
    `separation` is the single between-center distance knob (pairwise center
    distance = separation * sqrt(2), mean within-cluster latent variance 1).

    `anisotropy` > 1 stretches the shared within-cluster covariance along a
    seed-fixed random orientation (per-axis stds geomspace(a, 1/a), unit mean
    square), keeping the noise power but breaking isotropy.
    """

    k: int = 4
    n: int = 1000
    d_latent: int = 6
    view_dims: tuple[int, int] = (20, 20)
    view_noise: float | tuple[float, float] = 0.25
    separation: float = 5.0
    anisotropy: float = 1.0
    seed: int = 0
    identity_maps: bool = False

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("need k >= 2 clusters")
        if self.k > self.n:
            raise ValueError("more clusters than samples")
        if self.d_latent < self.k:
            raise ValueError("simplex construction needs d_latent >= k")
        if any(s < 0 for s in self.noise_per_view()):
            raise ValueError("view noise must be non-negative")
        if self.anisotropy < 1.0:
            raise ValueError("anisotropy is a stretch factor >= 1")
        if self.identity_maps and any(d != self.d_latent for d in self.view_dims):
            raise ValueError("identity maps require view dims equal to d_latent")

    def noise_per_view(self) -> tuple[float, float]:
        if isinstance(self.view_noise, (int, float)):
            return (float(self.view_noise), float(self.view_noise))
        return tuple(float(s) for s in self.view_noise)  # type: ignore[return-value]


def _simplex_centers(k: int, d: int, scale: float) -> np.ndarray:
    centers = np.zeros((k, d))
    centers[:, :k] = np.eye(k) - 1.0 / k  # centered regular simplex
    return scale * centers


def _noise_transform(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray | None:
    if spec.anisotropy == 1.0:
        return None
    scales = np.geomspace(spec.anisotropy, 1.0 / spec.anisotropy, spec.d_latent)
    scales /= np.sqrt((scales**2).mean())  # keep mean variance at 1
    rot = np.linalg.qr(rng.normal(size=(spec.d_latent, spec.d_latent)))[0]
    return np.diag(scales) @ rot


def generate_synthetic(spec: SyntheticSpec) -> MultiViewDataset:
    """Balanced labels, Gaussian cluster latents, fixed random linear maps
    into each view plus per-view Gaussian observation noise."""
    rng = stream(spec.seed, "synthetic")
    centers = _simplex_centers(spec.k, spec.d_latent, spec.separation)
    labels = rng.permutation(np.arange(spec.n) % spec.k)
    within = rng.standard_normal((spec.n, spec.d_latent))
    transform = _noise_transform(spec, rng)
    if transform is not None:
        within = within @ transform
    latents = centers[labels] + within

    views = []
    for d_v, sigma in zip(spec.view_dims, spec.noise_per_view()):
        if spec.identity_maps:
            mapped = latents
        else:
            A = rng.normal(size=(spec.d_latent, d_v)) / np.sqrt(spec.d_latent)
            mapped = latents @ A
        noise = sigma * rng.standard_normal((spec.n, d_v))
        views.append(mapped + noise)
    return MultiViewDataset(views=views, labels=labels)
