"""Pure-numpy kernel implementations.

These mirror the fused Cython loops operation-for-operation.  The optimizer
updates use only IEEE-correctly-rounded primitives (+, -, *, /, sqrt), so they
are bit-identical across the two backends; the GELU pair goes through tanh,
which may differ from libm in the last ulp depending on the numpy build.
"""

import numpy as np

SQRT_2_OVER_PI = 0.7978845608028654  # sqrt(2/pi)
GELU_C = 0.044715


def adamw_update(p, g, m, v, lr, beta1, beta2, eps, weight_decay, bc1, bc2):
    """In-place decoupled-weight-decay Adam step on one parameter array."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    p -= lr * ((m / bc1) / (np.sqrt(v / bc2) + eps) + weight_decay * p)


def sgd_update(p, g, lr, weight_decay):
    """In-place SGD step with decoupled weight decay."""
    p -= lr * (g + weight_decay * p)


def gelu_forward(x):
    inner = SQRT_2_OVER_PI * (x + GELU_C * (x * x * x))
    return 0.5 * x * (1.0 + np.tanh(inner))


def gelu_backward(x, grad_out):
    inner = SQRT_2_OVER_PI * (x + GELU_C * (x * x * x))
    t = np.tanh(inner)
    sech2 = 1.0 - t * t
    local = 0.5 * (1.0 + t) + 0.5 * x * sech2 * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * (x * x))
    return grad_out * local
