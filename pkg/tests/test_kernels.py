"""Cross-backend agreement for the compiled update kernels.

The optimizer updates use only IEEE-754 correctly rounded operations in a
pinned order, so the compiled and numpy backends must agree bit for bit.
GELU involves tanh, whose last-ulp rounding may differ between libm and
numpy, so it gets a tight tolerance instead.
"""

import numpy as np
import pytest

from cones_lab import _kernels
from cones_lab._kernels import _fallback
from cones_lab.rng import Rng

try:
    from cones_lab._kernels import _fused
except ImportError:
    _fused = None

needs_fused = pytest.mark.skipif(_fused is None, reason="compiled kernels not built")


def _adam_inputs(seed, n=257):
    rng = Rng(seed)
    return (rng.normal(0, 1, (n,)), rng.normal(0, 0.5, (n,)),
            rng.normal(0, 0.1, (n,)), np.abs(rng.normal(0, 0.01, (n,))))


def test_backend_reports_a_known_name():
    assert _kernels.BACKEND in ("fused", "numpy")


@needs_fused
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_adamw_update_bit_identical_across_backends(seed):
    p, g, m, v = _adam_inputs(seed)
    args = (1e-3, 0.9, 0.999, 1e-8, 0.05, 1 - 0.9 ** 3, 1 - 0.999 ** 3)
    pa, ma, va = p.copy(), m.copy(), v.copy()
    pb, mb, vb = p.copy(), m.copy(), v.copy()
    _fallback.adamw_update(pa, g, ma, va, *args)
    _fused.adamw_update(pb, g.copy(), mb, vb, *args)
    assert pa.tobytes() == pb.tobytes()
    assert ma.tobytes() == mb.tobytes()
    assert va.tobytes() == vb.tobytes()


@needs_fused
def test_sgd_update_bit_identical_across_backends():
    p, g, _, _ = _adam_inputs(9)
    pa, pb = p.copy(), p.copy()
    _fallback.sgd_update(pa, g, 0.1, 0.05)
    _fused.sgd_update(pb, g.copy(), 0.1, 0.05)
    assert pa.tobytes() == pb.tobytes()


@needs_fused
def test_gelu_agrees_across_backends_to_rounding():
    x = Rng(5).normal(0, 2, (4096,))
    # atol absorbs the deep-negative tail, where 1+tanh cancels to ~1e-13
    # and a last-ulp tanh difference dominates the (tiny) result
    ya = _fallback.gelu_forward(x)
    yb = np.asarray(_fused.gelu_forward(x.copy()))
    np.testing.assert_allclose(ya, yb, rtol=1e-12, atol=1e-14)
    ga = _fallback.gelu_backward(x, np.ones_like(x))
    gb = np.asarray(_fused.gelu_backward(x.copy(), np.ones_like(x)))
    np.testing.assert_allclose(ga, gb, rtol=1e-12, atol=1e-14)


def test_inplace_update_rejects_noncontiguous_views():
    p = np.zeros((4, 4))[:, ::2]
    with pytest.raises(ValueError, match="contiguous"):
        _kernels.sgd_update(p, np.ones_like(p), 0.1, 0.0)


def test_wrapper_updates_nd_arrays_in_place():
    p = np.ones((3, 5))
    g = np.full((3, 5), 2.0)
    _kernels.sgd_update(p, g, 0.1, 0.0)
    np.testing.assert_allclose(p, 0.8)
