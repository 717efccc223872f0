"""Minimal reverse-mode autodiff over numpy arrays.

Covers exactly the layer set the twin network needs: conv2d (stride 1,
valid padding), 2x2 max pooling, dense, relu, sigmoid, softplus, log,
clip, dropout, plus elementwise/reduction glue. Parameters are float32 by
default; reductions accumulate in float64 on every path. Gradcheck-style
tests run the same ops in float64.

Conventions pinned for deterministic gradients: relu'(0) = 0, maxpool
ties go to the first window element in row-major order.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import InvalidParam, ShapeMismatch

DEFAULT_DTYPE = np.float32

_grad_enabled = True


class no_grad:
    """Context manager that skips graph construction (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev


def _as_data(values, dtype=None):
    arr = np.asarray(values)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype in (np.float32, np.float64):
        return arr
    return arr.astype(DEFAULT_DTYPE)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None, name=""):
        self.data = _as_data(data, dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        g = g.astype(self.data.dtype, copy=False)
        if g.shape != self.data.shape:
            g = g.reshape(self.data.shape)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad = self.grad + g

    def backward(self):
        """Reverse-mode pass seeding d(self)/d(self) = 1."""
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
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self):
        return tmean(self)


def _wrap(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    """Sum gradient over axes numpy broadcast along, back to `shape`."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)), dtype=np.float64)
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True, dtype=np.float64)
    return g


def _check_broadcast(a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise and reductions
# ---------------------------------------------------------------------------

def add(a, b):
    a = _wrap(a, DEFAULT_DTYPE if not isinstance(b, Tensor) else b.dtype)
    b = _wrap(b, a.dtype)
    _check_broadcast(a, b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def mul(a, b):
    a = _wrap(a, DEFAULT_DTYPE if not isinstance(b, Tensor) else b.dtype)
    b = _wrap(b, a.dtype)
    _check_broadcast(a, b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul shapes {a.shape} x {b.shape}")
    a64 = a.data.astype(np.float64)
    b64 = b.data.astype(np.float64)
    data = (a64 @ b64).astype(a.dtype)

    def backward(g):
        g64 = g.astype(np.float64)
        if a.requires_grad:
            a._accumulate(g64 @ b64.T)
        if b.requires_grad:
            b._accumulate(a64.T @ g64)

    return _make(data, (a, b), backward)


def relu(x):
    mask = x.data > 0
    data = np.where(mask, x.data, 0)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return _make(data, (x,), backward)


def sigmoid(x):
    t = np.exp(-np.abs(x.data))
    data = np.where(x.data >= 0, 1.0 / (1.0 + t), t / (1.0 + t)).astype(x.dtype)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * data * (1.0 - data))

    return _make(data, (x,), backward)


def softplus(x):
    data = np.logaddexp(0.0, x.data).astype(x.dtype)
    t = np.exp(-np.abs(x.data))
    sig = np.where(x.data >= 0, 1.0 / (1.0 + t), t / (1.0 + t))

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * sig)

    return _make(data, (x,), backward)


def log(x):
    data = np.log(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g / x.data)

    return _make(data, (x,), backward)


def clip(x, lo, hi):
    data = np.clip(x.data, lo, hi)
    mask = (x.data >= lo) & (x.data <= hi)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return _make(data, (x,), backward)


def tsum(x, axis=None, keepdims=False):
    data = np.sum(x.data, axis=axis, keepdims=keepdims, dtype=np.float64).astype(x.dtype)

    def backward(g):
        if not x.requires_grad:
            return
        if axis is None:
            x._accumulate(np.broadcast_to(g, x.shape))
        else:
            gexp = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(gexp, x.shape))

    return _make(data, (x,), backward)


def tmean(x):
    n = x.data.size
    data = np.asarray(np.sum(x.data, dtype=np.float64) / n).astype(x.dtype)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.broadcast_to(g / n, x.shape))

    return _make(data, (x,), backward)


def reshape(x, shape):
    data = x.data.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.shape))

    return _make(data, (x,), backward)


def slice_rows(x, start, stop):
    data = x.data[start:stop]

    def backward(g):
        if x.requires_grad:
            full = np.zeros(x.shape, dtype=g.dtype)
            full[start:stop] = g
            x._accumulate(full)

    return _make(data, (x,), backward)


# ---------------------------------------------------------------------------
# network layers
# ---------------------------------------------------------------------------

def conv2d(inp, kernels, bias):
    """Cross-correlation, stride 1, valid padding: [N,C,H,W] -> [N,F,H',W']."""
    if inp.data.ndim != 4 or kernels.data.ndim != 4 or bias.data.ndim != 1:
        raise ShapeMismatch("conv2d expects 4-d input, 4-d kernels, 1-d bias")
    n, c, h, w = inp.shape
    f, ck, kh, kw = kernels.shape
    if ck != c:
        raise ShapeMismatch(f"conv2d channels: input has {c}, kernels expect {ck}")
    if bias.shape[0] != f:
        raise ShapeMismatch(f"conv2d bias length {bias.shape[0]} != {f} filters")
    if kh > h or kw > w:
        raise ShapeMismatch(f"kernel {kh}x{kw} larger than input {h}x{w}")
    data = _kernels.conv2d_forward(inp.data, kernels.data, bias.data)

    def backward(g):
        g = np.ascontiguousarray(g)
        if inp.requires_grad:
            inp._accumulate(_kernels.conv2d_backward_input(g, kernels.data))
        if kernels.requires_grad:
            kernels._accumulate(_kernels.conv2d_backward_kernels(g, inp.data, kh, kw))
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3), dtype=np.float64))

    return _make(data, (inp, kernels, bias), backward)


def maxpool2(inp):
    """2x2 non-overlapping max pool; odd edges padded with -inf first."""
    if inp.data.ndim != 4:
        raise ShapeMismatch("maxpool2 expects [N,C,H,W]")
    n, c, h, w = inp.shape
    hp, wp = h + (h & 1), w + (w & 1)
    if (hp, wp) != (h, w):
        xp = np.full((n, c, hp, wp), -np.inf, dtype=inp.dtype)
        xp[:, :, :h, :w] = inp.data
    else:
        xp = inp.data
    h2, w2 = hp // 2, wp // 2
    win = xp.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    arg = win.argmax(axis=-1)
    data = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        if not inp.requires_grad:
            return
        gwin = np.zeros((n, c, h2, w2, 4), dtype=g.dtype)
        np.put_along_axis(gwin, arg[..., None], g[..., None], axis=-1)
        gpad = gwin.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, hp, wp)
        inp._accumulate(gpad[:, :, :h, :w])

    return _make(data, (inp,), backward)


def dense(inp, weight, bias):
    """Affine map [N,D] @ [D,K] + [K]."""
    if inp.data.ndim != 2:
        raise ShapeMismatch("dense expects [N,D] input")
    if weight.data.ndim != 2 or inp.shape[1] != weight.shape[0]:
        raise ShapeMismatch(f"dense shapes {inp.shape} x {weight.shape}")
    if bias.data.ndim != 1 or bias.shape[0] != weight.shape[1]:
        raise ShapeMismatch(f"dense bias length {bias.shape} vs {weight.shape[1]}")
    return add(matmul(inp, weight), bias)


def dropout(x, rate, training, rng):
    """Inverted dropout: zero with prob `rate`, scale survivors by 1/(1-rate)."""
    if not (0.0 <= rate < 1.0):
        raise InvalidParam(f"dropout rate {rate} outside [0, 1)")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate)
    scale = 1.0 / (1.0 - rate)
    factor = (keep * scale).astype(x.dtype)
    data = x.data * factor

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * factor)

    return _make(data, (x,), backward)
