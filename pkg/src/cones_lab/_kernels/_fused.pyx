# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused elementwise kernels for the training hot path.

Single-pass loops replace chains of numpy temporaries.  The optimizer updates
use only correctly-rounded IEEE operations and match the numpy fallback bit
for bit; the GELU pair uses libm tanh and may differ from numpy's tanh in the
last ulp.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt, tanh

cnp.import_array()

cdef double SQRT_2_OVER_PI = 0.7978845608028654
cdef double GELU_C = 0.044715


def adamw_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                 double lr, double beta1, double beta2, double eps,
                 double weight_decay, double bc1, double bc2):
    """In-place decoupled-weight-decay Adam step on one parameter array."""
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double one_m_b1 = 1.0 - beta1
    cdef double one_m_b2 = 1.0 - beta2
    cdef double mi, vi
    for i in range(n):
        mi = beta1 * m[i] + one_m_b1 * g[i]
        vi = beta2 * v[i] + one_m_b2 * (g[i] * g[i])
        m[i] = mi
        v[i] = vi
        p[i] = p[i] - lr * ((mi / bc1) / (sqrt(vi / bc2) + eps) + weight_decay * p[i])


def sgd_update(double[::1] p, double[::1] g, double lr, double weight_decay):
    """In-place SGD step with decoupled weight decay."""
    cdef Py_ssize_t i, n = p.shape[0]
    for i in range(n):
        p[i] = p[i] - lr * (g[i] + weight_decay * p[i])


def gelu_forward(double[::1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] y = out
    cdef double xi, inner
    for i in range(n):
        xi = x[i]
        inner = SQRT_2_OVER_PI * (xi + GELU_C * (xi * xi * xi))
        y[i] = 0.5 * xi * (1.0 + tanh(inner))
    return out


def gelu_backward(double[::1] x, double[::1] grad_out):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] gx = out
    cdef double xi, inner, t, sech2, local
    for i in range(n):
        xi = x[i]
        inner = SQRT_2_OVER_PI * (xi + GELU_C * (xi * xi * xi))
        t = tanh(inner)
        sech2 = 1.0 - t * t
        local = 0.5 * (1.0 + t) + 0.5 * xi * sech2 * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * (xi * xi))
        gx[i] = grad_out[i] * local
    return out
