import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffmvc.nn import ParamStore, Tensor, assert_finite, stream


def numeric_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gf[i] = (up - down) / (2 * h)
    return g


def analytic_grad(op, x: np.ndarray) -> np.ndarray:
    t = Tensor(x.copy(), requires_grad=True)
    loss = op(t).sum()
    loss.backward()
    return t.grad


OPS = {
    "relu": lambda t: t.relu(),
    "gelu": lambda t: t.gelu(),
    "exp": lambda t: t.exp(),
    "softmax": lambda t: t.softmax(axis=-1),
    "l2norm": lambda t: t.l2_normalize(axis=-1),
    "square": lambda t: t**2,
    "mean": lambda t: t.mean(),
    "sum_axis0": lambda t: t.sum(axis=0),
    "reshape": lambda t: t.reshape(t.data.size, 1),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_elementwise_and_reduction_grads_match_fd(name):
    rng = stream(7, "tensor-grad", name)
    x = rng.normal(size=(4, 5)) + 0.1  # relu kink avoidance is not needed at this offset scale
    op = OPS[name]

    def f(arr):
        return op(Tensor(arr)).sum().item()

    got = analytic_grad(op, x)
    want = numeric_grad(f, x.copy())
    assert np.allclose(got, want, rtol=1e-5, atol=1e-7)


def test_log_grad_matches_fd_on_positive_input():
    rng = stream(7, "tensor-grad", "log")
    x = rng.uniform(0.5, 2.0, size=(3, 4))
    got = analytic_grad(lambda t: t.log(), x)
    want = numeric_grad(lambda a: Tensor(a).log().sum().item(), x.copy())
    assert np.allclose(got, want, rtol=1e-5)


def test_matmul_grads_both_sides():
    rng = stream(7, "tensor-grad", "matmul")
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    ta = Tensor(a, requires_grad=True)
    tb = Tensor(b, requires_grad=True)
    (ta @ tb).sum().backward()
    wa = numeric_grad(lambda x: (Tensor(x) @ Tensor(b)).sum().item(), a.copy())
    wb = numeric_grad(lambda x: (Tensor(a) @ Tensor(x)).sum().item(), b.copy())
    assert np.allclose(ta.grad, wa, rtol=1e-6)
    assert np.allclose(tb.grad, wb, rtol=1e-6)


def test_batched_matmul_with_shared_weight():
    # (n, h, d) @ (d, m): the weight gradient must sum over the batch.
    rng = stream(7, "tensor-grad", "batched")
    a = rng.normal(size=(5, 3, 4))
    w = rng.normal(size=(4, 2))
    ta = Tensor(a, requires_grad=True)
    tw = Tensor(w, requires_grad=True)
    ((ta @ tw) ** 2).sum().backward()
    assert ta.grad.shape == a.shape
    assert tw.grad.shape == w.shape
    ww = numeric_grad(lambda x: ((Tensor(a) @ Tensor(x)) ** 2).sum().item(), w.copy())
    assert np.allclose(tw.grad, ww, rtol=1e-5)


def test_broadcast_add_bias_grad():
    rng = stream(7, "tensor-grad", "bias")
    x = rng.normal(size=(6, 3))
    b = rng.normal(size=3)
    tb = Tensor(b, requires_grad=True)
    ((Tensor(x) + tb) ** 2).sum().backward()
    want = numeric_grad(lambda v: ((Tensor(x) + Tensor(v)) ** 2).sum().item(), b.copy())
    assert np.allclose(tb.grad, want, rtol=1e-5)


def test_div_grad():
    rng = stream(7, "tensor-grad", "div")
    a = rng.normal(size=(3, 3))
    b = rng.uniform(0.5, 2.0, size=(3, 3))
    ta, tb = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
    (ta / tb).sum().backward()
    assert np.allclose(ta.grad, 1.0 / b)
    assert np.allclose(tb.grad, -a / b**2)


def test_grad_accumulates_over_reuse():
    t = Tensor(np.array([[2.0]]), requires_grad=True)
    (t * t).sum().backward()  # d(x^2)/dx = 2x
    assert np.allclose(t.grad, [[4.0]])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_softmax_rows_sum_to_one(n, d, seed):
    x = stream(seed, "prop-softmax").normal(size=(n, d)) * 5.0
    s = Tensor(x).softmax(axis=-1).data
    assert np.all(s >= 0)
    assert np.allclose(s.sum(axis=-1), 1.0, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_l2_normalize_rows_unit_norm(n, d, seed):
    x = stream(seed, "prop-l2").normal(size=(n, d))
    x[np.abs(x).sum(axis=1) == 0] = 1.0  # keep rows nonzero
    y = Tensor(x).l2_normalize(axis=-1).data
    assert np.allclose(np.linalg.norm(y, axis=-1), 1.0, atol=1e-9)


def test_l2_normalize_zero_row_passthrough_warns():
    x = np.zeros((2, 3))
    x[1] = [3.0, 0.0, 4.0]
    with pytest.warns(RuntimeWarning, match="zero row"):
        y = Tensor(x).l2_normalize(axis=-1).data
    assert np.allclose(y[0], 0.0)
    assert np.allclose(np.linalg.norm(y[1]), 1.0)


def test_backward_requires_scalar():
    t = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        (t * 2).backward()


def test_matmul_rejects_vectors():
    with pytest.raises(ValueError):
        Tensor(np.ones(3)) @ Tensor(np.ones((3, 2)))


def test_assert_finite_raises_on_nan():
    with pytest.raises(FloatingPointError):
        assert_finite(np.array([1.0, np.nan]), "probe")


def test_paramstore_registration_and_moments():
    store = ParamStore()
    p = store.add("w", np.ones((2, 2)))
    assert p.requires_grad
    m, v = store.moments("w")
    assert m.shape == (2, 2) and v.shape == (2, 2)
    with pytest.raises(KeyError):
        store.add("w", np.ones(1))
    assert store.names() == ["w"]
    assert store.step_count == 0
