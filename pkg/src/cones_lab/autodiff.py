"""Reverse-mode automatic differentiation over numpy float64 arrays.

Each operation records its inputs and a closure that routes the output
gradient back to them, so calling ``backward()`` on a scalar loss walks the
recorded graph once in reverse topological order.  Only the primitives the
models in this package need are provided; all of them are checked against
central finite differences in the test suite.

Gradients accumulate into ``.grad`` on tensors with ``requires_grad=True``.
Frozen tensors (``requires_grad=False``) participate in the forward pass as
constants and receive no gradient.
"""

from __future__ import annotations

import numpy as np

from . import _kernels


_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def is_grad_enabled() -> bool:
    return _grad_enabled


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _binary_result(name: str, a: np.ndarray, b: np.ndarray, fn) -> np.ndarray:
    try:
        return fn(a, b)
    except ValueError:
        raise ValueError(f"{name}: incompatible shapes {a.shape} and {b.shape}") from None


class Tensor:
    __slots__ = ("data", "grad", "_requires_grad", "_backward", "_prev")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._requires_grad = bool(requires_grad)
        self._backward = None
        self._prev = ()

    # ---- bookkeeping ----

    @property
    def requires_grad(self) -> bool:
        return self._requires_grad

    @requires_grad.setter
    def requires_grad(self, flag: bool):
        if self._prev:
            raise ValueError("requires_grad can only be toggled on leaf tensors")
        self._requires_grad = bool(flag)

    @property
    def is_leaf(self) -> bool:
        return not self._prev

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self._requires_grad})"

    def __len__(self):
        return len(self.data)

    # ---- graph construction ----

    @staticmethod
    def _make(data: np.ndarray, parents: tuple, backward) -> "Tensor":
        out = Tensor(data)
        if _grad_enabled and any(p._requires_grad for p in parents):
            out._requires_grad = True
            out._prev = parents
            out._backward = backward
        return out

    def _accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = grad if grad.flags.owndata else grad.copy()
        else:
            self.grad = self.grad + grad

    def backward(self, gradient=None):
        if gradient is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient requires a scalar tensor")
            gradient = np.ones_like(self.data)
        if not self._requires_grad:
            return  # constant loss: nothing depends on a tunable input
        gradient = np.asarray(gradient, dtype=np.float64).reshape(self.data.shape)

        # iterative post-order DFS; recursion would overflow on deep graphs
        topo, visited, stack = [], set(), [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if p._requires_grad and id(p) not in visited:
                    stack.append((p, False))

        self._accumulate(gradient)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()
        # release the graph so closures do not pin intermediate arrays
        for node in topo:
            if node._prev:
                node._prev = ()
                node._backward = None
                if node is not self:
                    node.grad = None

    # ---- arithmetic ----

    def __add__(self, other):
        other = _wrap(other)
        out = Tensor._make(_binary_result("add", self.data, other.data, np.add),
                           (self, other), None)
        if out._prev:
            def bwd(out=out):
                g = out.grad
                if self._requires_grad:
                    self._accumulate(_unbroadcast(g, self.data.shape))
                if other._requires_grad:
                    other._accumulate(_unbroadcast(g, other.data.shape))
            out._backward = bwd
        return out

    __radd__ = __add__

    def __mul__(self, other):
        other = _wrap(other)
        out = Tensor._make(_binary_result("mul", self.data, other.data, np.multiply),
                           (self, other), None)
        if out._prev:
            def bwd(out=out):
                g = out.grad
                if self._requires_grad:
                    self._accumulate(_unbroadcast(g * other.data, self.data.shape))
                if other._requires_grad:
                    other._accumulate(_unbroadcast(g * self.data, other.data.shape))
            out._backward = bwd
        return out

    __rmul__ = __mul__

    def __neg__(self):
        out = Tensor._make(-self.data, (self,), None)
        if out._prev:
            out._backward = lambda: self._accumulate(-out.grad)
        return out

    def __sub__(self, other):
        return self + (-_wrap(other))

    def __rsub__(self, other):
        return _wrap(other) + (-self)

    def __truediv__(self, other):
        other = _wrap(other)
        out = Tensor._make(_binary_result("div", self.data, other.data, np.divide),
                           (self, other), None)
        if out._prev:
            def bwd(out=out):
                g = out.grad
                if self._requires_grad:
                    self._accumulate(_unbroadcast(g / other.data, self.data.shape))
                if other._requires_grad:
                    other._accumulate(_unbroadcast(-g * self.data / (other.data * other.data),
                                                   other.data.shape))
            out._backward = bwd
        return out

    def __rtruediv__(self, other):
        return _wrap(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only constant exponents are supported")
        c = float(exponent)
        out = Tensor._make(self.data ** c, (self,), None)
        if out._prev:
            def bwd(out=out):
                self._accumulate(out.grad * c * self.data ** (c - 1.0))
            out._backward = bwd
        return out

    def __matmul__(self, other):
        other = _wrap(other)
        if self.data.ndim < 2 or other.data.ndim < 2:
            raise ValueError(
                f"matmul: operands must be at least 2-D, got {self.data.shape} "
                f"and {other.data.shape}")
        if self.data.shape[-1] != other.data.shape[-2]:
            raise ValueError(
                f"matmul: incompatible shapes {self.data.shape} and {other.data.shape}")
        out = Tensor._make(self.data @ other.data, (self, other), None)
        if out._prev:
            def bwd(out=out):
                g = out.grad
                if self._requires_grad:
                    self._accumulate(_unbroadcast(g @ other.data.swapaxes(-1, -2),
                                                  self.data.shape))
                if other._requires_grad:
                    other._accumulate(_unbroadcast(self.data.swapaxes(-1, -2) @ g,
                                                   other.data.shape))
            out._backward = bwd
        return out

    # ---- elementwise functions ----

    def exp(self):
        e = np.exp(self.data)
        out = Tensor._make(e, (self,), None)
        if out._prev:
            out._backward = lambda: self._accumulate(out.grad * e)
        return out

    def log(self):
        out = Tensor._make(np.log(self.data), (self,), None)
        if out._prev:
            out._backward = lambda: self._accumulate(out.grad / self.data)
        return out

    def sqrt(self):
        s = np.sqrt(self.data)
        out = Tensor._make(s, (self,), None)
        if out._prev:
            out._backward = lambda: self._accumulate(out.grad * 0.5 / s)
        return out

    def tanh(self):
        t = np.tanh(self.data)
        out = Tensor._make(t, (self,), None)
        if out._prev:
            out._backward = lambda: self._accumulate(out.grad * (1.0 - t * t))
        return out

    def abs(self):
        out = Tensor._make(np.abs(self.data), (self,), None)
        if out._prev:
            out._backward = lambda: self._accumulate(out.grad * np.sign(self.data))
        return out

    def relu(self):
        out = Tensor._make(np.maximum(self.data, 0.0), (self,), None)
        if out._prev:
            out._backward = lambda: self._accumulate(out.grad * (self.data > 0.0))
        return out

    def gelu(self):
        out = Tensor._make(_kernels.gelu_forward(self.data), (self,), None)
        if out._prev:
            out._backward = lambda: self._accumulate(
                _kernels.gelu_backward(self.data, out.grad))
        return out

    def sigmoid(self):
        x = self.data
        s = np.where(x >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                     np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        out = Tensor._make(s, (self,), None)
        if out._prev:
            out._backward = lambda: self._accumulate(out.grad * s * (1.0 - s))
        return out

    def softplus(self):
        x = self.data
        sp = np.where(x > 0.0, x + np.log1p(np.exp(-np.abs(x))), np.log1p(np.exp(-np.abs(x))))
        out = Tensor._make(sp, (self,), None)
        if out._prev:
            sig = np.where(x >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                           np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
            out._backward = lambda: self._accumulate(out.grad * sig)
        return out

    # ---- reductions and normalizations (last axis unless stated) ----

    def softmax(self):
        m = self.data.max(axis=-1, keepdims=True)
        e = np.exp(self.data - m)
        s = e / e.sum(axis=-1, keepdims=True)
        out = Tensor._make(s, (self,), None)
        if out._prev:
            def bwd(out=out):
                g = out.grad
                self._accumulate(s * (g - (g * s).sum(axis=-1, keepdims=True)))
            out._backward = bwd
        return out

    def log_softmax(self):
        m = self.data.max(axis=-1, keepdims=True)
        shifted = self.data - m
        lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        out = Tensor._make(shifted - lse, (self,), None)
        if out._prev:
            sm = np.exp(shifted - lse)
            def bwd(out=out):
                g = out.grad
                self._accumulate(g - sm * g.sum(axis=-1, keepdims=True))
            out._backward = bwd
        return out

    def layer_norm(self, eps: float = 1e-5):
        """Normalize the last axis to zero mean, unit variance. Affine terms
        are composed outside with ``* gamma + beta``."""
        mu = self.data.mean(axis=-1, keepdims=True)
        var = self.data.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (self.data - mu) * inv
        out = Tensor._make(xhat, (self,), None)
        if out._prev:
            def bwd(out=out):
                g = out.grad
                gm = g.mean(axis=-1, keepdims=True)
                gx = (g * xhat).mean(axis=-1, keepdims=True)
                self._accumulate(inv * (g - gm - xhat * gx))
            out._backward = bwd
        return out

    def sum(self, axis=None, keepdims: bool = False):
        out = Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), None)
        if out._prev:
            def bwd(out=out):
                g = out.grad
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(g, self.data.shape).copy())
            out._backward = bwd
        return out

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # ---- shape manipulation ----

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor._make(self.data.reshape(shape), (self,), None)
        if out._prev:
            out._backward = lambda: self._accumulate(out.grad.reshape(self.data.shape))
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.data.ndim)))
        inverse = tuple(np.argsort(axes))
        out = Tensor._make(self.data.transpose(axes), (self,), None)
        if out._prev:
            out._backward = lambda: self._accumulate(out.grad.transpose(inverse))
        return out

    def __getitem__(self, idx):
        out = Tensor._make(self.data[idx], (self,), None)
        if out._prev:
            def bwd(out=out):
                gx = np.zeros_like(self.data)
                np.add.at(gx, idx, out.grad)
                self._accumulate(gx)
            out._backward = bwd
        return out


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = Tensor._make(data, tuple(tensors), None)
    if out._prev:
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)
        def bwd(out=out):
            g = out.grad
            sl = [slice(None)] * g.ndim
            for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
                if t._requires_grad:
                    sl[axis] = slice(start, stop)
                    t._accumulate(g[tuple(sl)])
        out._backward = bwd
    return out


def stack(tensors, axis: int = 0) -> Tensor:
    return concat([t.reshape(t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors], axis=axis)


def maximum(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor._make(np.maximum(a.data, b.data), (a, b), None)
    if out._prev:
        take_a = a.data >= b.data  # ties route to the first operand
        def bwd(out=out):
            g = out.grad
            if a._requires_grad:
                a._accumulate(_unbroadcast(g * take_a, a.data.shape))
            if b._requires_grad:
                b._accumulate(_unbroadcast(g * ~take_a, b.data.shape))
        out._backward = bwd
    return out


def minimum(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor._make(np.minimum(a.data, b.data), (a, b), None)
    if out._prev:
        take_a = a.data <= b.data
        def bwd(out=out):
            g = out.grad
            if a._requires_grad:
                a._accumulate(_unbroadcast(g * take_a, a.data.shape))
            if b._requires_grad:
                b._accumulate(_unbroadcast(g * ~take_a, b.data.shape))
        out._backward = bwd
    return out


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    return minimum(maximum(x, lo), hi)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Repeat the last two axes ``factor`` times each."""
    k = int(factor)
    data = np.repeat(np.repeat(x.data, k, axis=-2), k, axis=-1)
    out = Tensor._make(data, (x,), None)
    if out._prev:
        def bwd(out=out):
            g = out.grad
            lead = g.shape[:-2]
            h, w = x.data.shape[-2], x.data.shape[-1]
            g = g.reshape(lead + (h, k, w, k)).sum(axis=(-3, -1))
            x._accumulate(g)
        out._backward = bwd
    return out
