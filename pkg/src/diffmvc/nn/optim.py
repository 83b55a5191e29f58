"""AdamW / Adam steps over a ParamStore, plus a finite-difference checker."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParamStore
from .tensor import Tensor


def collect_grads(store: ParamStore) -> dict[str, np.ndarray]:
    """Gradient map after backward(); parameters outside the graph get zeros."""
    out = {}
    for name, p in store.items():
        out[name] = np.zeros_like(p.data) if p.grad is None else p.grad
    return out


def _check_grads(store: ParamStore, grads: dict[str, np.ndarray]) -> None:
    for name, g in grads.items():
        p = store[name]
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient for {name!r}")


def adamw_step(
    store: ParamStore,
    grads: dict[str, np.ndarray],
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> None:
    """One AdamW update: decoupled decay theta *= (1 - lr*wd), then the
    bias-corrected adaptive step. Increments the store's step counter by 1."""
    _check_grads(store, grads)
    b1, b2 = betas
    store.step_count += 1
    t = store.step_count
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, g in grads.items():
        p = store[name]
        if weight_decay != 0.0:
            p.data *= 1.0 - lr * weight_decay
        m, v = store.moments(name)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def adam_step(
    store: ParamStore,
    grads: dict[str, np.ndarray],
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    """Classic Adam (no decay); written out separately so the AdamW
    weight_decay=0 equivalence can be tested against an independent path."""
    _check_grads(store, grads)
    b1, b2 = betas
    store.step_count += 1
    t = store.step_count
    for name, g in grads.items():
        p = store[name]
        m, v = store.moments(name)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


def gradient_check(loss_fn: Callable[[], Tensor], store: ParamStore, h: float = 1e-5) -> float:
    """Max over parameter entries of |analytic - central difference| / max(1, |analytic|).

    loss_fn must be deterministic (freeze any RNG draws before calling);
    a drifting loss between probe evaluations is rejected outright.
    """
    v1 = loss_fn().item()
    v2 = loss_fn().item()
    if v1 != v2:
        raise RuntimeError("loss_fn is nondeterministic across probe evaluations")

    store.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = collect_grads(store)

    worst = 0.0
    for name, p in store.items():
        flat = p.data.reshape(-1)
        a = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().item()
            flat[i] = orig - h
            down = loss_fn().item()
            flat[i] = orig
            fd = (up - down) / (2.0 * h)
            err = abs(a[i] - fd) / max(1.0, abs(a[i]))
            if err > worst:
                worst = err
    return worst
