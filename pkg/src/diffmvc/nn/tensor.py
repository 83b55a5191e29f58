"""Reverse-mode autodiff over dense float64 numpy arrays.

Small tape-free graph engine: each Tensor remembers its parents and a
closure that routes the upstream gradient to them. Only the operations
needed by the MLP / attention / loss stack in this repository are
implemented; everything runs in float64 so finite-difference checks have
headroom.
"""
from __future__ import annotations

import warnings

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # ---- construction helpers -------------------------------------------------

    @staticmethod
    def const(data) -> "Tensor":
        return Tensor(data, requires_grad=False)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # ---- graph plumbing -------------------------------------------------------

    def _child(self, data: np.ndarray, parents: tuple, backward) -> "Tensor":
        out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        return out

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's .grad."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without grad requires a scalar output")
            grad = np.ones_like(self.data)
        else:
            grad = _as_array(grad)

        topo: list[Tensor] = []
        seen = set()

        def visit(node: Tensor):
            stack = [(node, False)]
            while stack:
                n, done = stack.pop()
                if done:
                    topo.append(n)
                    continue
                if id(n) in seen or not n.requires_grad:
                    continue
                seen.add(id(n))
                stack.append((n, True))
                for p in n._parents:
                    stack.append((p, False))

        visit(self)
        grads = {id(self): grad}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad or pg is None:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # ---- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor.const(other)
        data = self.data + other.data

        def bwd(g):
            return (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape))

        return self._child(data, (self, other), bwd)

    __radd__ = __add__

    def __neg__(self):
        return self._child(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor.const(other)
        return self + (-other)

    def __rsub__(self, other):
        return Tensor.const(other) + (-self)

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor.const(other)
        data = self.data * other.data
        a, b = self, other

        def bwd(g):
            return (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape))

        return self._child(data, (a, b), bwd)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = other if isinstance(other, Tensor) else Tensor.const(other)
        data = self.data / other.data
        a, b = self, other

        def bwd(g):
            ga = _unbroadcast(g / b.data, a.shape)
            gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
            return (ga, gb)

        return self._child(data, (a, b), bwd)

    def __pow__(self, p: float):
        if not isinstance(p, (int, float)):
            raise TypeError("only scalar exponents are supported")
        data = self.data ** p
        x = self

        def bwd(g):
            return (g * p * x.data ** (p - 1),)

        return self._child(data, (x,), bwd)

    def __matmul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor.const(other)
        if self.ndim < 2 or other.ndim < 2:
            raise ValueError("matmul operands must be at least 2-D")
        data = self.data @ other.data
        a, b = self, other

        def bwd(g):
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
            return (ga, gb)

        return self._child(data, (a, b), bwd)

    # ---- shape ops ------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        return self._child(self.data.reshape(shape), (self,), lambda g: (g.reshape(src),))

    def transpose_last(self):
        """Swap the trailing two axes (matrix transpose for batched tensors)."""
        data = np.swapaxes(self.data, -1, -2)
        return self._child(data, (self,), lambda g: (np.swapaxes(g, -1, -2),))

    # ---- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        data = self.data.sum(axis=axis, keepdims=keepdims)
        src_shape = self.shape

        def bwd(g):
            if axis is None:
                return (np.broadcast_to(g, src_shape).copy(),)
            if not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, src_shape).copy(),)

        return self._child(data, (self,), bwd)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # ---- elementwise nonlinearities --------------------------------------------

    def relu(self):
        mask = self.data > 0

        def bwd(g):
            return (g * mask,)

        return self._child(self.data * mask, (self,), bwd)

    def gelu(self):
        x = self.data
        phi = 0.5 * (1.0 + erf(x * _INV_SQRT2))
        data = x * phi

        def bwd(g):
            return (g * (phi + x * np.exp(-0.5 * x * x) * _INV_SQRT2PI),)

        return self._child(data, (self,), bwd)

    def exp(self):
        data = np.exp(self.data)

        def bwd(g):
            return (g * data,)

        return self._child(data, (self,), bwd)

    def log(self):
        x = self.data

        def bwd(g):
            return (g / x,)

        return self._child(np.log(x), (self,), bwd)

    def xlogx(self):
        """x * log(x) with the 0 log 0 := 0 convention (entropy terms)."""
        x = self.data
        zero = x == 0.0
        safe = np.where(zero, 1.0, x)
        data = np.where(zero, 0.0, x * np.log(safe))

        def bwd(g):
            # subgradient 0 at the boundary keeps degenerate rows inert
            return (g * np.where(zero, 0.0, np.log(safe) + 1.0),)

        return self._child(data, (self,), bwd)

    def softmax(self, axis: int = -1):
        """Row-stochastic softmax along `axis`, stabilised by max subtraction."""
        z = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=axis, keepdims=True)

        def bwd(g):
            dot = (g * s).sum(axis=axis, keepdims=True)
            return (s * (g - dot),)

        return self._child(s, (self,), bwd)

    def l2_normalize(self, axis: int = -1):
        """Unit-norm rows along `axis`; all-zero rows pass through unchanged."""
        norm = np.linalg.norm(self.data, axis=axis, keepdims=True)
        zero_rows = norm == 0.0
        if zero_rows.any():
            warnings.warn(
                f"l2_normalize: {int(zero_rows.sum())} zero row(s) left unnormalized",
                RuntimeWarning,
                stacklevel=2,
            )
        safe = np.where(zero_rows, 1.0, norm)
        y = self.data / safe

        def bwd(g):
            dot = (g * y).sum(axis=axis, keepdims=True)
            return ((g - y * dot) / safe,)

        return self._child(y, (self,), bwd)


def assert_finite(x, what: str = "tensor") -> None:
    """Raise on NaN/Inf; forward passes must stay finite."""
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    if not np.isfinite(data).all():
        raise FloatingPointError(f"non-finite values in {what}")
