import numpy as np
import pytest

from diffmvc.nn import (
    AttentionBlock,
    MlpSpec,
    ParamStore,
    Tensor,
    attention,
    gradient_check,
    init_attention,
    init_mlp,
    mlp_forward,
    stream,
)


def test_zero_weights_give_activated_bias():
    spec = MlpSpec([3, 2], activation="relu", output_activation="identity")
    store = ParamStore()
    init_mlp(spec, store, "m", stream(0, "t"))
    store["m/W0"].data[:] = 0.0
    store["m/b0"].data[:] = [0.5, -1.0]
    out = mlp_forward(spec, store, "m", np.random.default_rng(0).normal(size=(4, 3))).data
    assert np.allclose(out, [0.5, -1.0])


def test_single_identity_layer_relu_output():
    spec = MlpSpec([2, 2], activation="relu", output_activation="identity")
    store = ParamStore()
    init_mlp(spec, store, "m", stream(0, "t"))
    store["m/W0"].data[:] = np.eye(2)
    store["m/b0"].data[:] = 0.0
    # relu applies on hidden layers only; single layer means raw affine output
    out = mlp_forward(spec, store, "m", np.array([[-1.0, 2.0]])).data
    assert np.allclose(out, [[-1.0, 2.0]])

    spec2 = MlpSpec([2, 2, 2], activation="relu", output_activation="identity")
    store2 = ParamStore()
    init_mlp(spec2, store2, "m", stream(0, "t"))
    store2["m/W0"].data[:] = np.eye(2)
    store2["m/b0"].data[:] = 0.0
    store2["m/W1"].data[:] = np.eye(2)
    store2["m/b1"].data[:] = 0.0
    out2 = mlp_forward(spec2, store2, "m", np.array([[-1.0, 2.0]])).data
    assert np.allclose(out2, [[0.0, 2.0]])


def test_three_layer_mlp_gradient_matches_fd():
    spec = MlpSpec([3, 5, 4, 2], activation="relu", output_activation="identity")
    store = ParamStore()
    init_mlp(spec, store, "net", stream(11, "mlp-fd"))
    x = stream(11, "mlp-fd", "x").normal(size=(6, 3))

    def loss():
        return mlp_forward(spec, store, "net", x).sum()

    assert gradient_check(loss, store, h=1e-5) < 1e-4


def test_mlp_width_mismatch_raises():
    spec = MlpSpec([3, 2])
    store = ParamStore()
    init_mlp(spec, store, "m", stream(0, "t"))
    with pytest.raises(ValueError, match="width"):
        mlp_forward(spec, store, "m", np.ones((2, 4)))


def test_mlp_nonfinite_output_raises():
    spec = MlpSpec([2, 2])
    store = ParamStore()
    init_mlp(spec, store, "m", stream(0, "t"))
    store["m/W0"].data[:] = 1e308
    with pytest.raises(FloatingPointError):
        mlp_forward(spec, store, "m", np.full((1, 2), 1e308))


def test_mlp_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec([4])
    with pytest.raises(ValueError):
        MlpSpec([4, 0])
    with pytest.raises(ValueError):
        MlpSpec([4, 2], activation="tanh")
    with pytest.raises(ValueError):
        MlpSpec([4, 2], output_activation="relu")


def _identity_block(d: int) -> tuple[AttentionBlock, ParamStore]:
    block = AttentionBlock("a", d_query=d, d_context=d, d=d)
    store = ParamStore()
    init_attention(block, store, stream(3, "attn"))
    for name in ("phi_W", "tau_W", "WQ", "WK", "WV"):
        store[f"a/{name}"].data[:] = np.eye(d)
    store["a/phi_b"].data[:] = 0.0
    store["a/tau_b"].data[:] = 0.0
    return block, store


def test_single_context_token_returns_value_row():
    block, store = _identity_block(2)
    query = np.random.default_rng(0).normal(size=(3, 2))
    context = np.array([[0.7, -0.3]])
    out = attention(block, store, query, context).data
    # one key -> softmax weight 1 regardless of the query
    assert np.allclose(out, np.repeat(context, 3, axis=0))


def test_identical_context_tokens_weighted_half_half():
    block, store = _identity_block(2)
    ctx_row = np.array([1.0, 2.0])
    context = np.stack([ctx_row, ctx_row])
    query = np.array([[5.0, -1.0], [0.0, 0.0]])
    out = attention(block, store, query, context).data
    assert np.allclose(out, np.stack([ctx_row, ctx_row]))


def test_attention_matches_hand_evaluation():
    # h=1, m=2, hand-chosen 2x2 mapping matrices, identity phi/tau.
    block = AttentionBlock("a", d_query=2, d_context=2, d=2)
    store = ParamStore()
    init_attention(block, store, stream(5, "attn-hand"))
    WQ = np.array([[1.0, 0.5], [-0.5, 1.0]])
    WK = np.array([[0.8, -0.2], [0.3, 1.1]])
    WV = np.array([[1.2, 0.0], [0.1, -0.7]])
    for name, w in (("WQ", WQ), ("WK", WK), ("WV", WV)):
        store[f"a/{name}"].data[:] = w
    store["a/phi_W"].data[:] = np.eye(2)
    store["a/tau_W"].data[:] = np.eye(2)
    store["a/phi_b"].data[:] = 0.0
    store["a/tau_b"].data[:] = 0.0

    query = np.array([[0.4, -1.0]])
    context = np.array([[1.0, 0.2], [-0.6, 0.9]])

    q = query @ WQ
    k = context @ WK
    v = context @ WV
    scores = q @ k.T / np.sqrt(2.0)
    e = np.exp(scores - scores.max())
    w = e / e.sum()
    want = w @ v

    got = attention(block, store, query, context).data
    assert np.allclose(got, want, atol=1e-12)


def test_attention_weights_rows_sum_to_one_and_grads_flow():
    block = AttentionBlock("a", d_query=3, d_context=2, d=4)
    store = ParamStore()
    init_attention(block, store, stream(9, "attn-grad"))
    query = stream(9, "attn-grad", "q").normal(size=(4, 3))
    context = stream(9, "attn-grad", "c").normal(size=(5, 2))

    def loss():
        return (attention(block, store, query, context) ** 2).sum()

    assert gradient_check(loss, store, h=1e-5) < 1e-4


def test_attention_batched_matches_per_sample():
    block = AttentionBlock("a", d_query=3, d_context=3, d=2)
    store = ParamStore()
    init_attention(block, store, stream(13, "attn-batch"))
    rng = stream(13, "attn-batch", "data")
    q = rng.normal(size=(6, 4, 3))
    c = rng.normal(size=(6, 2, 3))
    batched = attention(block, store, q, c).data
    for i in range(6):
        single = attention(block, store, q[i], c[i]).data
        assert np.allclose(batched[i], single, atol=1e-12)


def test_attention_zero_width_rejected():
    with pytest.raises(ValueError):
        AttentionBlock("a", d_query=2, d_context=2, d=0)
