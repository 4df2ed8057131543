"""Transformer building blocks on the autodiff core.

Modules hold named parameter tensors and expose them through ``params()``;
the model assembles these into its partition registry.  All blocks are
pre-norm residual.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor
from ..rng import Rng


class Module:
    def params(self) -> dict:
        out = {}
        for key, value in vars(self).items():
            if isinstance(value, Tensor):
                out[key] = value
            elif isinstance(value, Module):
                for sub, t in value.params().items():
                    out[f"{key}.{sub}"] = t
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        for sub, t in item.params().items():
                            out[f"{key}{i}.{sub}"] = t
        return out


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: Rng, bias: bool = True):
        self.w = Tensor(rng.normal(0.0, d_in ** -0.5, (d_in, d_out)), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.w
        return y + self.b if self.b is not None else y


class LayerNorm(Module):
    def __init__(self, d: int):
        self.gamma = Tensor(np.ones(d), requires_grad=True)
        self.beta = Tensor(np.zeros(d), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x.layer_norm() * self.gamma + self.beta


class MultiHeadAttention(Module):
    """Self- or cross-attention over (B, T, d) streams."""

    def __init__(self, d: int, heads: int, rng: Rng):
        self.heads = heads
        self.dh = d // heads
        self.wq = Linear(d, d, rng.spawn("wq"))
        self.wk = Linear(d, d, rng.spawn("wk"))
        self.wv = Linear(d, d, rng.spawn("wv"))
        self.wo = Linear(d, d, rng.spawn("wo"))

    def _split(self, x: Tensor) -> Tensor:
        b, t, d = x.shape
        return x.reshape(b, t, self.heads, self.dh).transpose(0, 2, 1, 3)

    def attention_weights(self, q_in: Tensor, kv_in: Tensor) -> Tensor:
        q, k = self._split(self.wq(q_in)), self._split(self.wk(kv_in))
        return ((q @ k.transpose(0, 1, 3, 2)) * (self.dh ** -0.5)).softmax()

    def __call__(self, q_in: Tensor, kv_in: Tensor = None) -> Tensor:
        if kv_in is None:
            kv_in = q_in
        q = self._split(self.wq(q_in))
        k = self._split(self.wk(kv_in))
        v = self._split(self.wv(kv_in))
        attn = ((q @ k.transpose(0, 1, 3, 2)) * (self.dh ** -0.5)).softmax()
        ctx = attn @ v
        b = max(q_in.shape[0], kv_in.shape[0])
        t, d = q_in.shape[1], self.heads * self.dh
        ctx = ctx.transpose(0, 2, 1, 3).reshape(b, t, d)
        return self.wo(ctx)


class Block(Module):
    """Pre-norm transformer block: attention then MLP, both residual."""

    def __init__(self, d: int, heads: int, mlp_ratio: int, rng: Rng):
        self.ln1 = LayerNorm(d)
        self.attn = MultiHeadAttention(d, heads, rng.spawn("attn"))
        self.ln2 = LayerNorm(d)
        self.fc1 = Linear(d, d * mlp_ratio, rng.spawn("fc1"))
        self.fc2 = Linear(d * mlp_ratio, d, rng.spawn("fc2"))

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.ln1(x))
        return x + self.fc2(self.fc1(self.ln2(x)).gelu())


class FusionLayer(Module):
    """Bidirectional cross-attention exchange with residual addition:
    V' = V + XAttn(V queries, P keys/values), P' = P + XAttn(P, V)."""

    def __init__(self, d: int, heads: int, rng: Rng):
        self.i2t = MultiHeadAttention(d, heads, rng.spawn("i2t"))
        self.t2i = MultiHeadAttention(d, heads, rng.spawn("t2i"))

    def __call__(self, v: Tensor, p: Tensor):
        v_ctx = self.i2t(v, p)
        p_ctx = self.t2i(p, v)
        return v + v_ctx, p + p_ctx


class Mlp(Module):
    """Two-layer head: d -> hidden -> out."""

    def __init__(self, d: int, hidden: int, out: int, rng: Rng):
        self.fc1 = Linear(d, hidden, rng.spawn("fc1"))
        self.fc2 = Linear(hidden, out, rng.spawn("fc2"))

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).gelu())
