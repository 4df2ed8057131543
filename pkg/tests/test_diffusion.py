"""Toy diffusion tests: schedule arithmetic, noising invariants, loss
gradients, sampling determinism, and conditioning behavior."""

import numpy as np
import pytest

from cones_lab.autodiff import Tensor
from cones_lab.diffusion import (NoiseSchedule, ToyDenoiser, generation_loss,
                                 linear_schedule, make_solid_images,
                                 noisy_sample, sample_generation,
                                 sinusoidal_embedding, train_denoiser,
                                 write_ppm)
from cones_lab.errors import DivergenceError
from cones_lab.rng import Rng
from helpers import fd_check_scalar


def tiny_denoiser(seed=0):
    return ToyDenoiser(Rng(seed), image_hw=4, hidden=16, layers=2,
                       cond_dim=8, temb_dim=8)


def test_schedule_shapes_and_endpoints():
    s = linear_schedule()
    assert s.steps == 100
    assert abs(s.betas[0] - 1e-4) < 1e-18
    assert abs(s.betas[-1] - 0.02) < 1e-18
    assert np.all(np.diff(s.betas) > 0)
    assert np.all((s.alpha_bars > 0) & (s.alpha_bars < 1))
    assert np.all(np.diff(s.alpha_bars) < 0)
    # first cumulative product is exactly 1 - beta_1
    assert s.alpha_bars[0] == 1.0 - 1e-4


def test_timestep_range_validated():
    d = tiny_denoiser()
    s = linear_schedule()
    x0 = np.zeros((1, 4, 4, 3))
    eps = np.zeros((1, 48))
    cond = Tensor(np.zeros((1, 8)))
    with pytest.raises(ValueError, match="timestep"):
        generation_loss(d, s, x0, cond, [0], eps)
    with pytest.raises(ValueError, match="timestep"):
        generation_loss(d, s, x0, cond, [101], eps)


def test_oracle_denoiser_zero_loss_and_grads():
    class Oracle:
        flat_dim = 48

        def __init__(self, eps):
            self.eps = eps

        def __call__(self, z, t, cond):
            return Tensor(self.eps)

    r = Rng(1)
    eps = r.normal(0, 1, (3, 48))
    cond = Tensor(r.normal(0, 1, (1, 8)), requires_grad=True)
    s = linear_schedule()
    loss = generation_loss(Oracle(eps), s, r.random((3, 4, 4, 3)), cond,
                           [1, 50, 100], eps)
    assert loss.item() == 0.0
    loss.backward()
    assert cond.grad is None   # prediction never depended on cond


def test_noising_variance_approaches_unit():
    s = linear_schedule()
    r = Rng(7)
    n = 10000
    x0 = r.normal(0, 1, (n, 4))
    eps = r.normal(0, 1, (n, 4))
    for t in (1, 50, 100):
        z = noisy_sample(s, x0, np.full(n, t), eps)
        assert abs(np.var(z) - 1.0) < 0.05


def test_noisy_sample_hand_value():
    s = linear_schedule()
    x0 = np.array([[1.0]])
    eps = np.array([[2.0]])
    z = noisy_sample(s, x0, np.array([1]), eps)
    want = np.sqrt(1 - 1e-4) * 1.0 + np.sqrt(1e-4) * 2.0
    assert abs(float(z[0, 0]) - want) < 1e-12


def test_sinusoidal_embedding_shape_and_range():
    e = sinusoidal_embedding([1, 50, 100], 8)
    assert e.shape == (3, 8)
    assert np.abs(e).max() <= 1.0
    assert not np.allclose(e[0], e[1])


def test_generation_loss_gradients_match_finite_differences():
    s = linear_schedule()

    def build(rng):
        d = tiny_denoiser(int(rng.integers(0, 1000, ())))
        x0 = rng.random((2, 4, 4, 3))
        eps = rng.normal(0, 1, (2, 48))
        t = np.asarray(rng.integers(1, 101, (2,)))
        cond = Tensor(rng.normal(0, 0.5, (1, 8)), requires_grad=True)
        win = d.input.w
        wout = d.output.w
        # the output layer starts at zero; give it mass so upstream
        # gradients are exercised
        wout.data[...] = rng.normal(0, 0.2, wout.data.shape)
        win.requires_grad = True
        wout.requires_grad = True
        return [cond, win, wout], \
            lambda c, a, b: generation_loss(d, s, x0, c, t, eps)
    assert fd_check_scalar(build, instances=100, max_coords=6) < 1e-4


def test_sampling_deterministic_and_bounded():
    d = tiny_denoiser()
    s = linear_schedule()
    cond = Tensor(np.zeros((1, 8)))
    a = sample_generation(d, s, cond, Rng(42), n_samples=3)
    b = sample_generation(d, s, cond, Rng(42), n_samples=3)
    assert np.array_equal(a, b)
    assert a.shape == (3, 4, 4, 3)
    assert a.min() >= 0.0 and a.max() <= 1.0
    c = sample_generation(d, s, cond, Rng(43), n_samples=3)
    assert not np.array_equal(a, c)


def test_zero_denoiser_sample_finite():
    d = tiny_denoiser()
    for t in d.params().values():
        t.data[...] = 0.0
    s = linear_schedule()
    out = sample_generation(d, s, Tensor(np.zeros((1, 8))), Rng(0), 2)
    assert np.isfinite(out).all()


def test_train_denoiser_reduces_loss():
    d = ToyDenoiser(Rng(0), image_hw=4, hidden=64, layers=2, cond_dim=8,
                    temb_dim=8)
    s = linear_schedule()
    r = Rng(5)
    images = make_solid_images((0.9, 0.1, 0.1), 32, r, hw=4, jitter=0.1)
    conds = np.tile(r.normal(0, 1, (1, 8)), (32, 1))
    hist = train_denoiser(d, s, images, conds, steps=500, rng=Rng(6),
                          batch_size=64)
    assert np.mean(hist[:20]) > np.mean(hist[-20:])
    assert np.mean(hist[-20:]) < 0.5 * np.mean(hist[:20])


def test_train_denoiser_divergence_error():
    d = tiny_denoiser()
    s = linear_schedule()
    r = Rng(5)
    images = make_solid_images((0.5, 0.5, 0.5), 8, r, hw=4)
    images[0, 0, 0, 0] = np.nan   # poisoned pixel surfaces as non-finite loss
    conds = np.zeros((8, 8))
    with pytest.raises(DivergenceError):
        train_denoiser(d, s, images, conds, steps=200, rng=Rng(6))


def test_conditioning_steers_samples():
    """Two colors, two conditioning vectors: each conditioned sample's mean
    color lands nearer its own color."""
    d = ToyDenoiser(Rng(0), image_hw=4, hidden=128, layers=2, cond_dim=8,
                    temb_dim=8)
    s = linear_schedule()
    r = Rng(9)
    red_rgb, blue_rgb = (0.95, 0.1, 0.1), (0.1, 0.1, 0.95)
    red = make_solid_images(red_rgb, 48, r, hw=4, jitter=0.1)
    blue = make_solid_images(blue_rgb, 48, r, hw=4, jitter=0.1)
    cond_r = r.normal(0, 1, (1, 8))
    cond_b = r.normal(0, 1, (1, 8))
    images = np.concatenate([red, blue])
    conds = np.concatenate([np.tile(cond_r, (48, 1)), np.tile(cond_b, (48, 1))])
    train_denoiser(d, s, images, conds, steps=800, rng=Rng(10),
                   batch_size=256)
    for cond, color, other in ((cond_r, red_rgb, blue_rgb),
                               (cond_b, blue_rgb, red_rgb)):
        samples = sample_generation(d, s, Tensor(cond), Rng(11), 16)
        hits = 0
        for img in samples:
            mean = img.mean(axis=(0, 1))
            own = np.linalg.norm(mean - np.array(color))
            far = np.linalg.norm(mean - np.array(other))
            hits += own < far
        assert hits >= 12, f"only {hits}/16 steered toward {color}"


def test_ppm_round_trip(tmp_path):
    img = Rng(3).random((4, 4, 3))
    path = str(tmp_path / "x.ppm")
    write_ppm(path, img)
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        dims = fh.readline().split()
        depth = fh.readline().strip()
        payload = fh.read()
    assert magic == b"P6" and depth == b"255"
    assert [int(v) for v in dims] == [4, 4]
    back = np.frombuffer(payload, dtype=np.uint8).reshape(4, 4, 3)
    assert np.array_equal(back, (img * 255.0).round().astype(np.uint8))
    with pytest.raises(ValueError):
        write_ppm(str(tmp_path / "bad.ppm"), np.zeros((4, 4)))
