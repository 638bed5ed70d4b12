"""Dense tensors with reverse-mode differentiation.

A Tensor wraps a numpy array plus an optional gradient buffer.  Every
operation that touches a differentiable input records its parents and a
backward closure on the result; calling backward() on a scalar loss
walks that implicit tape once in reverse topological order, accumulates
grads, and then frees the graph.  Only the operations the forecasting
model needs exist, and none of them broadcast beyond what those uses
require.

Working precision is float32.  Passing dtype=np.float64 at construction
propagates through every op (numpy promotion), which is what the
finite-difference verification tests run under.
"""

import math
from contextlib import contextmanager

import numpy as np
from scipy.special import erf

DEFAULT_DTYPE = np.float32

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording, for inference and rollout."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _sum_to_shape(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient of a broadcast result back to the operand shape."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or DEFAULT_DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def _accum(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Populate grads of everything the loss depends on, free the tape."""
        if self.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {self.shape}")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accum(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None:
                node._backward()
            node._backward = None
            node._parents = ()

    # -- graph construction helper ------------------------------------

    @staticmethod
    def _make(data, parents, backward):
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), scale(self, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __truediv__(self, s):
        return scale(self, 1.0 / float(s))

    # -- shape ops (shared names with numpy so window code is generic) --

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.data.shape
        out = Tensor._make(
            self.data.reshape(shape), (self,), None
        )
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad.reshape(src))
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(range(self.data.ndim))[::-1]
        inv = tuple(np.argsort(axes))
        out = Tensor._make(self.data.transpose(axes), (self,), None)
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad.transpose(inv))
        return out

    def take(self, indices, axis=0):
        idx = np.asarray(indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ValueError("take expects a flat index array")
        out = Tensor._make(self.data.take(idx, axis=axis), (self,), None)
        if out.requires_grad:

            def back():
                buf = np.zeros_like(np.moveaxis(self.data, axis, 0))
                np.add.at(buf, idx, np.moveaxis(out.grad, axis, 0))
                self._accum(np.moveaxis(buf, 0, axis))

            out._backward = back
        return out

    def sum(self, axis=None, keepdims=False):
        out = Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), None)
        if out.requires_grad:
            src = self.data.shape

            def back():
                g = out.grad
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accum(np.broadcast_to(g, src).copy())

            out._backward = back
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return scale(self.sum(axis=axis, keepdims=keepdims), 1.0 / n)


def _wrap(v) -> Tensor:
    if isinstance(v, Tensor):
        return v
    return Tensor(np.asarray(v))


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor._make(a.data + b.data, (a, b), None)
    if out.requires_grad:

        def back():
            if a.requires_grad:
                a._accum(_sum_to_shape(out.grad, a.data.shape))
            if b.requires_grad:
                b._accum(_sum_to_shape(out.grad, b.data.shape))

        out._backward = back
    return out


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor._make(a.data * b.data, (a, b), None)
    if out.requires_grad:

        def back():
            if a.requires_grad:
                a._accum(_sum_to_shape(out.grad * b.data, a.data.shape))
            if b.requires_grad:
                b._accum(_sum_to_shape(out.grad * a.data, b.data.shape))

        out._backward = back
    return out


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    out = Tensor._make(a.data * np.asarray(s, dtype=a.data.dtype), (a,), None)
    if out.requires_grad:
        out._backward = lambda: a._accum(out.grad * s)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must have at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = Tensor._make(a.data @ b.data, (a, b), None)
    if out.requires_grad:

        def back():
            if a.requires_grad:
                a._accum(_sum_to_shape(out.grad @ b.data.swapaxes(-1, -2), a.data.shape))
            if b.requires_grad:
                b._accum(_sum_to_shape(a.data.swapaxes(-1, -2) @ out.grad, b.data.shape))

        out._backward = back
    return out


def concat(tensors, axis=0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    out = Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tensors, None)
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]

        def back():
            for t, g in zip(tensors, np.split(out.grad, splits, axis=axis)):
                if t.requires_grad:
                    t._accum(g)

        out._backward = back
    return out


def split(t: Tensor, sizes, axis=0) -> list:
    if sum(sizes) != t.shape[axis]:
        raise ValueError(f"split sizes {sizes} do not cover axis of extent {t.shape[axis]}")
    pieces = []
    start = 0
    for s in sizes:
        pieces.append(t.take(np.arange(start, start + s), axis=axis))
        start += s
    return pieces


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b over the last axis."""
    return add(matmul(x, w), b)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance, then affine."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor._make(
        (gamma.data * xhat + beta.data).astype(x.data.dtype), (x, gamma, beta), None
    )
    if out.requires_grad:
        n = x.data.shape[-1]

        def back():
            g = out.grad
            if beta.requires_grad:
                beta._accum(_sum_to_shape(g, beta.data.shape))
            if gamma.requires_grad:
                gamma._accum(_sum_to_shape(g * xhat, gamma.data.shape))
            if x.requires_grad:
                dxh = g * gamma.data
                x._accum(
                    inv
                    * (
                        dxh
                        - dxh.mean(axis=-1, keepdims=True)
                        - xhat * (dxh * xhat).mean(axis=-1, keepdims=True)
                    )
                )

        out._backward = back
    return out


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = Tensor._make((x.data * cdf).astype(x.data.dtype), (x,), None)
    if out.requires_grad:

        def back():
            pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT2PI
            x._accum(out.grad * (cdf + x.data * pdf))

        out._backward = back
    return out


def softmax_with_mask(logits: Tensor, mask: Tensor) -> Tensor:
    """Softmax over the last axis of logits + mask (mask entries 0 or -LARGE)."""
    z = logits.data + mask.data
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)
    out = Tensor._make(s.astype(logits.data.dtype), (logits, mask), None)
    if out.requires_grad:

        def back():
            ds = s * (out.grad - (out.grad * s).sum(axis=-1, keepdims=True))
            if logits.requires_grad:
                logits._accum(_sum_to_shape(ds, logits.data.shape))
            if mask.requires_grad:
                mask._accum(_sum_to_shape(ds, mask.data.shape))

        out._backward = back
    return out


def l1(x: Tensor, y: Tensor) -> Tensor:
    """Mean absolute difference; the subgradient at zero is taken as 0."""
    if x.shape != y.shape:
        raise ValueError(f"l1 operands differ in shape: {x.shape} vs {y.shape}")
    d = x.data - y.data
    out = Tensor._make(np.asarray(np.abs(d).mean(), dtype=x.data.dtype), (x, y), None)
    if out.requires_grad:

        def back():
            g = out.grad * np.sign(d) / d.size
            if x.requires_grad:
                x._accum(g)
            if y.requires_grad:
                y._accum(-g)

        out._backward = back
    return out


def attention(q: Tensor, k: Tensor, v: Tensor, bias: Tensor, mask: Tensor) -> Tensor:
    """SoftMax(q kᵀ / sqrt(d) + bias + mask) v over windows and heads.

    q, k, v: (n_windows, heads, W, d_head); bias broadcasts over windows,
    mask over heads.  The scale is the per-head width.
    """
    if q.ndim != 4 or q.shape != k.shape or q.shape != v.shape:
        raise ValueError(f"attention expects matching 4-D q/k/v, got {q.shape}")
    logits = scale(matmul(q, k.transpose(0, 1, 3, 2)), 1.0 / math.sqrt(q.shape[-1]))
    weights = softmax_with_mask(add(logits, bias), mask)
    return matmul(weights, v)
