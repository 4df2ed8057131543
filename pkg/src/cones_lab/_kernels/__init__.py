"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; set
``CONES_LAB_KERNELS=numpy`` to force the pure-numpy fallback (the benchmark
does this to compare the two).  Both backends expose the same four functions.
"""

import os

import numpy as np

from . import _fallback

_FORCED = os.environ.get("CONES_LAB_KERNELS", "").lower()

if _FORCED in ("numpy", "python", "fallback"):
    _impl = _fallback
    BACKEND = "numpy"
else:
    try:
        from . import _fused as _impl

        BACKEND = "fused"
    except ImportError:
        _impl = _fallback
        BACKEND = "numpy"


def _flat_view(a):
    # ravel() on a non-contiguous array would copy and drop the in-place update
    if not a.flags.c_contiguous:
        raise ValueError("in-place kernel requires a C-contiguous array")
    return a.ravel()


def adamw_update(p, g, m, v, lr, beta1, beta2, eps, weight_decay, bc1, bc2):
    _impl.adamw_update(_flat_view(p), np.ascontiguousarray(g).ravel(), _flat_view(m),
                       _flat_view(v), lr, beta1, beta2, eps, weight_decay, bc1, bc2)


def sgd_update(p, g, lr, weight_decay):
    _impl.sgd_update(_flat_view(p), np.ascontiguousarray(g).ravel(), lr, weight_decay)


def gelu_forward(x):
    flat = np.ascontiguousarray(x).ravel()
    return _impl.gelu_forward(flat).reshape(x.shape)


def gelu_backward(x, grad_out):
    flat_x = np.ascontiguousarray(x).ravel()
    flat_g = np.ascontiguousarray(grad_out).ravel()
    return _impl.gelu_backward(flat_x, flat_g).reshape(x.shape)
