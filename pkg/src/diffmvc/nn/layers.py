"""MLP and scaled dot-product attention layers over the Tensor engine."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamStore
from .tensor import Tensor, assert_finite

_HIDDEN_ACTS = ("relu", "gelu", "identity")
_OUTPUT_ACTS = ("identity", "softmax", "l2norm")


@dataclass
class MlpSpec:
    """Dense stack: widths[0] -> widths[1] -> ... -> widths[-1].

    `activation` applies after every layer but the last, `output_activation`
    after the last. softmax rows sum to 1 and l2norm rows have unit norm
    (engine invariants, checked in the property suite).
    """

    widths: list[int]
    activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("MlpSpec needs at least one layer (two widths)")
        if any(w <= 0 for w in self.widths):
            raise ValueError("layer widths must be positive")
        if self.activation not in _HIDDEN_ACTS:
            raise ValueError(f"unknown hidden activation {self.activation!r}")
        if self.output_activation not in _OUTPUT_ACTS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def d_in(self) -> int:
        return self.widths[0]

    @property
    def d_out(self) -> int:
        return self.widths[-1]


def init_weight(rng: np.random.Generator, fan_in: int, fan_out: int, he: bool) -> np.ndarray:
    # He fan-in scaling suits relu/gelu layers; Xavier suits linear heads.
    limit = np.sqrt(6.0 / fan_in) if he else np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_mlp(spec: MlpSpec, store: ParamStore, prefix: str, rng: np.random.Generator) -> None:
    n_layers = len(spec.widths) - 1
    for i in range(n_layers):
        fan_in, fan_out = spec.widths[i], spec.widths[i + 1]
        he = i < n_layers - 1 and spec.activation in ("relu", "gelu")
        store.add(f"{prefix}/W{i}", init_weight(rng, fan_in, fan_out, he))
        # small uniform bias keeps relu pre-activations off the exact kink
        bound = 1.0 / np.sqrt(fan_in)
        store.add(f"{prefix}/b{i}", rng.uniform(-bound, bound, size=fan_out))


def _activate(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return x.relu()
    if kind == "gelu":
        return x.gelu()
    if kind == "softmax":
        return x.softmax(axis=-1)
    if kind == "l2norm":
        return x.l2_normalize(axis=-1)
    return x


def mlp_forward(spec: MlpSpec, store: ParamStore, prefix: str, x) -> Tensor:
    """Forward pass; gradients flow to every weight and to the input."""
    if not isinstance(x, Tensor):
        x = Tensor.const(x)
    if x.shape[-1] != spec.d_in:
        raise ValueError(f"input width {x.shape[-1]} != spec width {spec.d_in}")
    n_layers = len(spec.widths) - 1
    for i in range(n_layers):
        x = x @ store[f"{prefix}/W{i}"] + store[f"{prefix}/b{i}"]
        x = _activate(x, spec.activation if i < n_layers - 1 else spec.output_activation)
    assert_finite(x, f"mlp {prefix!r} output")
    return x


@dataclass
class AttentionBlock:
    """Cross-attention: queries from one view's tokens, keys/values from the
    companion view's. phi/tau are linear layers; W_Q/W_K/W_V project both
    sides to the shared width d."""

    prefix: str
    d_query: int
    d_context: int
    d: int

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError("attention width d must be positive")

    def param_names(self) -> list[str]:
        return [f"{self.prefix}/{n}" for n in ("phi_W", "phi_b", "tau_W", "tau_b", "WQ", "WK", "WV")]


def init_attention(block: AttentionBlock, store: ParamStore, rng: np.random.Generator) -> None:
    p = block.prefix
    store.add(f"{p}/phi_W", init_weight(rng, block.d_query, block.d_query, he=False))
    store.add(f"{p}/phi_b", np.zeros(block.d_query))
    store.add(f"{p}/tau_W", init_weight(rng, block.d_context, block.d_context, he=False))
    store.add(f"{p}/tau_b", np.zeros(block.d_context))
    store.add(f"{p}/WQ", init_weight(rng, block.d_query, block.d, he=False))
    store.add(f"{p}/WK", init_weight(rng, block.d_context, block.d, he=False))
    store.add(f"{p}/WV", init_weight(rng, block.d_context, block.d, he=False))


def attention(block: AttentionBlock, store: ParamStore, query_tokens, context_tokens) -> Tensor:
    """softmax(Q K^T / sqrt(d)) V with Q = phi(query) WQ, K = tau(context) WK,
    V = tau(context) WV. Accepts (h, d_q)/(m, d_c) tokens or batched
    (..., h, d_q)/(..., m, d_c)."""
    if not isinstance(query_tokens, Tensor):
        query_tokens = Tensor.const(query_tokens)
    if not isinstance(context_tokens, Tensor):
        context_tokens = Tensor.const(context_tokens)
    if query_tokens.shape[-1] != block.d_query or context_tokens.shape[-1] != block.d_context:
        raise ValueError("token width does not match attention block")
    p = block.prefix
    phi = query_tokens @ store[f"{p}/phi_W"] + store[f"{p}/phi_b"]
    tau = context_tokens @ store[f"{p}/tau_W"] + store[f"{p}/tau_b"]
    q = phi @ store[f"{p}/WQ"]
    k = tau @ store[f"{p}/WK"]
    v = tau @ store[f"{p}/WV"]
    scores = (q @ k.transpose_last()) * (1.0 / np.sqrt(block.d))
    weights = scores.softmax(axis=-1)
    return weights @ v
