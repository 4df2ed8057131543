"""Shared test utilities: the finite-difference gradient harness and the
registry of autodiff primitives it sweeps.

Each registry entry builds random small tensors (every dim <= 8), applies one
primitive, and the harness compares backward() gradients against central
finite differences of a randomly weighted scalarization of the output.
"""

import numpy as np

from cones_lab import autodiff as ad
from cones_lab.autodiff import Tensor, no_grad
from cones_lab.rng import Rng


def _t(arr):
    return Tensor(arr, requires_grad=True)


def _signed(rng, shape, lo=0.2, hi=2.0):
    """Values bounded away from zero, random sign per element."""
    mag = rng.uniform(lo, hi, shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return mag * sign


def _dims(rng, n):
    return tuple(int(rng.integers(2, 6)) for _ in range(n))


# Each builder: rng -> (inputs, fn). Kink-bearing ops draw inputs away from
# their kinks; finite differences are meaningless at a non-differentiable point.
PRIMITIVES = {
    "add": lambda rng: (lambda s: ([_t(rng.normal(0, 1, s)), _t(rng.normal(0, 1, s))],
                                   lambda a, b: a + b))(_dims(rng, 2)),
    "add_broadcast": lambda rng: (lambda s: ([_t(rng.normal(0, 1, s)), _t(rng.normal(0, 1, (1, s[1])))],
                                             lambda a, b: a + b))(_dims(rng, 2)),
    "sub": lambda rng: (lambda s: ([_t(rng.normal(0, 1, s)), _t(rng.normal(0, 1, s))],
                                   lambda a, b: a - b))(_dims(rng, 2)),
    "mul": lambda rng: (lambda s: ([_t(rng.normal(0, 1, s)), _t(rng.normal(0, 1, s))],
                                   lambda a, b: a * b))(_dims(rng, 2)),
    "mul_broadcast": lambda rng: (lambda s: ([_t(rng.normal(0, 1, s)), _t(rng.normal(0, 1, (s[0], 1)))],
                                             lambda a, b: a * b))(_dims(rng, 2)),
    "div": lambda rng: (lambda s: ([_t(rng.normal(0, 1, s)), _t(_signed(rng, s, 0.5, 1.5))],
                                   lambda a, b: a / b))(_dims(rng, 2)),
    "neg": lambda rng: ([_t(rng.normal(0, 1, _dims(rng, 2)))], lambda a: -a),
    "pow_square": lambda rng: ([_t(rng.normal(0, 1, _dims(rng, 2)))], lambda a: a ** 2),
    "pow_sqrt": lambda rng: ([_t(rng.uniform(0.3, 2.5, _dims(rng, 2)))], lambda a: a ** 0.5),
    "pow_inverse": lambda rng: ([_t(rng.uniform(0.4, 2.0, _dims(rng, 2)))], lambda a: a ** -1),
    "matmul": lambda rng: (lambda m, k, n: ([_t(rng.normal(0, 1, (m, k))), _t(rng.normal(0, 1, (k, n)))],
                                            lambda a, b: a @ b))(
        int(rng.integers(2, 6)), int(rng.integers(2, 6)), int(rng.integers(2, 6))),
    "matmul_batched": lambda rng: (lambda b, m, k, n: (
        [_t(rng.normal(0, 1, (b, m, k))), _t(rng.normal(0, 1, (b, k, n)))],
        lambda x, y: x @ y))(2, int(rng.integers(2, 5)), int(rng.integers(2, 5)), int(rng.integers(2, 5))),
    "matmul_broadcast": lambda rng: (lambda b, m, k, n: (
        [_t(rng.normal(0, 1, (b, m, k))), _t(rng.normal(0, 1, (k, n)))],
        lambda x, y: x @ y))(2, int(rng.integers(2, 5)), int(rng.integers(2, 5)), int(rng.integers(2, 5))),
    "exp": lambda rng: ([_t(rng.normal(0, 1, _dims(rng, 2)))], lambda a: a.exp()),
    "log": lambda rng: ([_t(rng.uniform(0.3, 3.0, _dims(rng, 2)))], lambda a: a.log()),
    "sqrt": lambda rng: ([_t(rng.uniform(0.3, 3.0, _dims(rng, 2)))], lambda a: a.sqrt()),
    "tanh": lambda rng: ([_t(rng.normal(0, 1.5, _dims(rng, 2)))], lambda a: a.tanh()),
    "abs": lambda rng: ([_t(_signed(rng, _dims(rng, 2)))], lambda a: a.abs()),
    "relu": lambda rng: ([_t(_signed(rng, _dims(rng, 2)))], lambda a: a.relu()),
    "gelu": lambda rng: ([_t(rng.normal(0, 1.5, _dims(rng, 2)))], lambda a: a.gelu()),
    "sigmoid": lambda rng: ([_t(rng.normal(0, 2, _dims(rng, 2)))], lambda a: a.sigmoid()),
    "softplus": lambda rng: ([_t(rng.normal(0, 2, _dims(rng, 2)))], lambda a: a.softplus()),
    "softmax": lambda rng: ([_t(rng.normal(0, 1.5, _dims(rng, 2)))], lambda a: a.softmax()),
    "log_softmax": lambda rng: ([_t(rng.normal(0, 1.5, _dims(rng, 2)))], lambda a: a.log_softmax()),
    "layer_norm": lambda rng: ([_t(rng.normal(0, 1.5, (int(rng.integers(2, 6)), int(rng.integers(3, 8)))))],
                               lambda a: a.layer_norm()),
    "sum_all": lambda rng: ([_t(rng.normal(0, 1, _dims(rng, 2)))], lambda a: a.sum()),
    "sum_axis": lambda rng: ([_t(rng.normal(0, 1, _dims(rng, 3)))], lambda a: a.sum(axis=1)),
    "sum_keepdims": lambda rng: ([_t(rng.normal(0, 1, _dims(rng, 2)))],
                                 lambda a: a.sum(axis=-1, keepdims=True)),
    "mean": lambda rng: ([_t(rng.normal(0, 1, _dims(rng, 2)))], lambda a: a.mean(axis=0)),
    "reshape": lambda rng: (lambda s: ([_t(rng.normal(0, 1, s))],
                                       lambda a: a.reshape(s[0] * s[1])))(_dims(rng, 2)),
    "transpose": lambda rng: ([_t(rng.normal(0, 1, _dims(rng, 3)))],
                              lambda a: a.transpose(1, 0, 2)),
    "getitem_slice": lambda rng: ([_t(rng.normal(0, 1, (5, 4)))], lambda a: a[1:4, ::2]),
    "getitem_fancy": lambda rng: (lambda idx: ([_t(rng.normal(0, 1, (6, 3)))], lambda a: a[idx]))(
        rng.integers(0, 6, (5,))),
    "concat": lambda rng: (lambda s: ([_t(rng.normal(0, 1, s)), _t(rng.normal(0, 1, s))],
                                      lambda a, b: ad.concat([a, b], axis=1)))(_dims(rng, 2)),
    "stack": lambda rng: (lambda s: ([_t(rng.normal(0, 1, s)), _t(rng.normal(0, 1, s))],
                                     lambda a, b: ad.stack([a, b], axis=0)))(_dims(rng, 2)),
    "maximum": lambda rng: (lambda s: (lambda a: ([_t(a), _t(a + _signed(rng, s, 0.2, 1.0))],
                                                  lambda x, y: ad.maximum(x, y)))(rng.normal(0, 1, s)))(_dims(rng, 2)),
    "minimum": lambda rng: (lambda s: (lambda a: ([_t(a), _t(a + _signed(rng, s, 0.2, 1.0))],
                                                  lambda x, y: ad.minimum(x, y)))(rng.normal(0, 1, s)))(_dims(rng, 2)),
    # keep clamp inputs clear of the bounds at +-1.5, where the kink sits
    "clamp": lambda rng: (lambda s: (lambda m: ([_t(np.where(m > 1.3, m + 0.4, m)
                                                     * np.where(rng.random(s) < 0.5, -1.0, 1.0))],
                                                lambda a: ad.clamp(a, -1.5, 1.5)))(
        rng.uniform(0.2, 2.6, s)))(_dims(rng, 2)),
    "upsample_nearest": lambda rng: ([_t(rng.normal(0, 1, (2, 3, 3)))],
                                     lambda a: ad.upsample_nearest(a, 2)),
}


def fd_check_primitive(name, instances=100, h=1e-5, max_coords=12, seed=20240801):
    """Sweep one primitive; returns the worst relative error seen."""
    builder = PRIMITIVES[name]
    worst = 0.0
    master = Rng(seed).spawn(name)
    for k in range(instances):
        rng = master.spawn(k)
        inputs, fn = builder(rng)
        out = fn(*inputs)
        weights = rng.normal(0, 1, out.shape) if out.shape else np.asarray(rng.normal(0, 1))
        loss = (out * Tensor(weights)).sum()
        loss.backward()
        for x in inputs:
            analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
            n = x.data.size
            if n <= max_coords:
                coords = range(n)
            else:
                coords = sorted(set(int(c) for c in rng.integers(0, n, (max_coords,))))
            for c in coords:
                orig = x.data.flat[c]
                with no_grad():
                    x.data.flat[c] = orig + h
                    hi = float((fn(*inputs).data * weights).sum())
                    x.data.flat[c] = orig - h
                    lo = float((fn(*inputs).data * weights).sum())
                x.data.flat[c] = orig
                fd = (hi - lo) / (2.0 * h)
                a = analytic.flat[c]
                err = abs(a - fd) / max(1.0, abs(a), abs(fd))
                worst = max(worst, err)
    return worst


def fd_check_scalar(build, instances=100, h=1e-5, max_coords=10, seed=20240815):
    """FD-check a scalar-valued function against its backward gradients.

    build(rng) -> (inputs, fn) where fn(*inputs) returns a 0-d Tensor.
    Returns the worst relative error seen.
    """
    worst = 0.0
    master = Rng(seed)
    for k in range(instances):
        rng = master.spawn(k)
        inputs, fn = build(rng)
        loss = fn(*inputs)
        assert loss.shape == (), "loss functions must return scalars"
        loss.backward()
        for x in inputs:
            analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
            n = x.data.size
            if n <= max_coords:
                coords = range(n)
            else:
                coords = sorted(set(int(c) for c in rng.integers(0, n, (max_coords,))))
            for c in coords:
                orig = x.data.flat[c]
                with no_grad():
                    x.data.flat[c] = orig + h
                    hi = fn(*inputs).item()
                    x.data.flat[c] = orig - h
                    lo = fn(*inputs).item()
                x.data.flat[c] = orig
                fd = (hi - lo) / (2.0 * h)
                a = analytic.flat[c]
                err = abs(a - fd) / max(1.0, abs(a), abs(fd))
                worst = max(worst, err)
    return worst
