import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffmvc.nn import (
    MlpSpec,
    ParamStore,
    adam_step,
    adamw_step,
    collect_grads,
    gradient_check,
    init_mlp,
    mlp_forward,
    stream,
)


def make_store(values: dict[str, np.ndarray]) -> ParamStore:
    store = ParamStore()
    for name, v in values.items():
        store.add(name, v)
    return store


def test_zero_lr_leaves_params_unchanged():
    store = make_store({"w": np.array([[1.0, -2.0]])})
    adamw_step(store, {"w": np.array([[5.0, 5.0]])}, lr=0.0, weight_decay=0.1)
    assert np.allclose(store["w"].data, [[1.0, -2.0]])
    assert store.step_count == 1


def test_zero_grad_decay_only_step():
    store = make_store({"w": np.array([[2.0, -4.0]])})
    lr, wd = 0.1, 0.5
    adamw_step(store, {"w": np.zeros((1, 2))}, lr=lr, weight_decay=wd)
    assert np.allclose(store["w"].data, np.array([[2.0, -4.0]]) * (1 - lr * wd))
    m, v = store.moments("w")
    assert np.allclose(m, 0.0) and np.allclose(v, 0.0)


def test_first_step_matches_hand_recurrence():
    g = np.array([[0.3, -1.7]])
    theta0 = np.array([[1.0, 1.0]])
    lr, eps = 0.01, 1e-8
    store = make_store({"w": theta0.copy()})
    adamw_step(store, {"w": g}, lr=lr, betas=(0.9, 0.999), eps=eps, weight_decay=0.0)
    # After one step m_hat = g, v_hat = g^2, so the update is -lr * g / (|g| + eps).
    want = theta0 - lr * g / (np.abs(g) + eps)
    assert np.allclose(store["w"].data, want, atol=1e-12)


def test_nonfinite_gradient_rejected():
    store = make_store({"w": np.ones(2)})
    with pytest.raises(FloatingPointError):
        adamw_step(store, {"w": np.array([1.0, np.inf])}, lr=0.1)


def test_gradient_shape_mismatch_rejected():
    store = make_store({"w": np.ones((2, 2))})
    with pytest.raises(ValueError):
        adamw_step(store, {"w": np.ones(3)}, lr=0.1)


def test_step_counter_increments_once_per_step():
    store = make_store({"w": np.ones(2)})
    for i in range(5):
        adamw_step(store, {"w": np.full(2, 0.1)}, lr=0.01)
        assert store.step_count == i + 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 20))
def test_adamw_without_decay_coincides_with_adam(seed, steps):
    rng = stream(seed, "adamw-vs-adam")
    init = rng.normal(size=(3, 2))
    grads = [rng.normal(size=(3, 2)) for _ in range(steps)]
    s1 = make_store({"w": init.copy()})
    s2 = make_store({"w": init.copy()})
    for g in grads:
        adamw_step(s1, {"w": g}, lr=0.05, weight_decay=0.0)
        adam_step(s2, {"w": g}, lr=0.05)
    assert np.allclose(s1["w"].data, s2["w"].data, atol=1e-12, rtol=0)


def test_gradient_check_quadratic_is_tiny():
    store = make_store({"theta": stream(1, "gc").normal(size=(4,))})

    def loss():
        t = store["theta"]
        return (t.reshape(1, 4) ** 2).sum() * 0.5

    assert gradient_check(loss, store, h=1e-5) < 1e-7


def test_gradient_check_flags_corrupted_gradient():
    store = make_store({"theta": np.array([2.0, 3.0, -4.0])})

    def broken_identity(t):
        # forward is the identity but backward reports twice the gradient
        return t._child(t.data.copy(), (t,), lambda g: (2.0 * g,))

    def loss():
        return (broken_identity(store["theta"]).reshape(1, 3) ** 2).sum() * 0.5

    err = gradient_check(loss, store, h=1e-5)
    assert abs(err - 0.5) < 1e-3


def test_gradient_check_rejects_nondeterministic_loss():
    store = make_store({"theta": np.ones(2)})
    rng = np.random.default_rng(0)

    def noisy():
        return (store["theta"].reshape(1, 2) * rng.normal()) .sum()

    with pytest.raises(RuntimeError):
        gradient_check(noisy, store)


def test_mlp_mse_gradient_check_under_1e4():
    spec = MlpSpec([4, 6, 3], activation="gelu", output_activation="identity")
    store = ParamStore()
    init_mlp(spec, store, "net", stream(21, "gc-mlp"))
    x = stream(21, "gc-mlp", "x").normal(size=(5, 4))
    target = stream(21, "gc-mlp", "y").normal(size=(5, 3))

    def loss():
        diff = mlp_forward(spec, store, "net", x) - target
        return (diff**2).mean()

    assert gradient_check(loss, store, h=1e-5) < 1e-4


def test_collect_grads_fills_zeros_for_unused_params():
    store = make_store({"used": np.ones((1, 2)), "unused": np.ones((2, 2))})
    (store["used"] * 3.0).sum().backward()
    grads = collect_grads(store)
    assert np.allclose(grads["used"], 3.0)
    assert np.allclose(grads["unused"], 0.0)


def test_training_trajectory_is_deterministic():
    def run():
        spec = MlpSpec([3, 4, 1])
        store = ParamStore()
        init_mlp(spec, store, "n", stream(5, "determinism"))
        x = stream(5, "determinism", "x").normal(size=(8, 3))
        y = stream(5, "determinism", "y").normal(size=(8, 1))
        for _ in range(10):
            store.zero_grad()
            ((mlp_forward(spec, store, "n", x) - y) ** 2).mean().backward()
            adamw_step(store, collect_grads(store), lr=1e-2, weight_decay=1e-2)
        return store.copy_values()

    a, b = run(), run()
    for name in a:
        assert np.array_equal(a[name], b[name])
