"""Gradient-descent optimizers over autodiff leaf tensors.

The update arithmetic lives in ``cones_lab._kernels`` so the compiled and
pure-numpy backends share one definition.  Updates are in place: parameter
arrays keep their identity across steps, which checkpointing and the freeze
contracts rely on.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .autodiff import Tensor


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most max_norm.

    Returns the norm before clipping. Parameters without gradients are ignored.
    """
    grads = [p.grad for p in params if p.grad is not None]
    total = 0.0
    for g in grads:
        total += float((g * g).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


class _Optimizer:
    def __init__(self, params):
        self.params = [p for p in params]
        for p in self.params:
            if not isinstance(p, Tensor) or not p.is_leaf:
                raise ValueError("optimizers accept leaf tensors only")

    @property
    def num_parameters(self) -> int:
        return sum(p.size for p in self.params)

    def _gradients(self):
        missing = [i for i, p in enumerate(self.params) if p.grad is None]
        if missing:
            raise ValueError(f"step() before backward: parameter {missing[0]} has no gradient")
        return [p.grad for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class SGD(_Optimizer):
    def __init__(self, params, lr: float, weight_decay: float = 0.0):
        super().__init__(params)
        self.lr = float(lr)
        self.weight_decay = float(weight_decay)

    def step(self):
        grads = self._gradients()
        for p, g in zip(self.params, grads):
            _kernels.sgd_update(p.data, g, self.lr, self.weight_decay)
        self.zero_grad()


class Adam(_Optimizer):
    """Adam with decoupled weight decay (the decay term multiplies the
    parameter directly instead of entering the moment estimates)."""

    def __init__(self, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        super().__init__(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        grads = self._gradients()
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self._m, self._v):
            _kernels.adamw_update(p.data, g, m, v, self.lr, self.beta1, self.beta2,
                                  self.eps, self.weight_decay, bc1, bc2)
        self.zero_grad()

    def state_arrays(self):
        """Moment buffers keyed by position, for checkpointing."""
        return {"m": self._m, "v": self._v, "t": self.t}
