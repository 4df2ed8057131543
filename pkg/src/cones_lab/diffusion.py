"""Toy conditional denoising-diffusion generator.

Operates directly in pixel space on 8x8 RGB images (identity latent).  The
denoiser is an MLP; the timestep enters as a sinusoidal embedding and the
conditioning vector (for example the mean of a class's concept tokens) is
projected and added at every hidden layer, so gradients with respect to the
conditioning are non-trivial.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, no_grad
from .errors import DivergenceError
from .model.layers import Linear, Module
from .optim import Adam, clip_grad_norm
from .rng import Rng


@dataclass
class NoiseSchedule:
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.betas)


def linear_schedule(steps: int = 100, beta_start: float = 1e-4,
                    beta_end: float = 0.02) -> NoiseSchedule:
    betas = np.linspace(beta_start, beta_end, steps)
    alphas = 1.0 - betas
    return NoiseSchedule(betas=betas, alphas=alphas,
                         alpha_bars=np.cumprod(alphas))


def sinusoidal_embedding(t, dim: int) -> np.ndarray:
    """Classic sin/cos position code for integer timesteps, shape (B, dim)."""
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(1, half - 1))
    angles = t * freqs.reshape(1, -1)
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


class ToyDenoiser(Module):
    def __init__(self, rng: Rng, image_hw: int = 8, channels: int = 3,
                 hidden: int = 128, layers: int = 2, cond_dim: int = 64,
                 temb_dim: int = 32):
        self.image_hw = image_hw
        self.channels = channels
        self.cond_dim = cond_dim
        self.temb_dim = temb_dim
        flat = image_hw * image_hw * channels
        self.input = Linear(flat, hidden, rng.spawn("in"))
        self.hidden = [Linear(hidden, hidden, rng.spawn(f"h{i}"))
                       for i in range(layers)]
        self.time_proj = [Linear(temb_dim, hidden, rng.spawn(f"t{i}"), bias=False)
                          for i in range(layers)]
        self.cond_proj = [Linear(cond_dim, hidden, rng.spawn(f"c{i}"), bias=False)
                          for i in range(layers)]
        self.output = Linear(hidden, flat, rng.spawn("out"))
        # start as the zero predictor so early updates stay small
        self.output.w.data[...] = 0.0

    @property
    def flat_dim(self) -> int:
        return self.image_hw * self.image_hw * self.channels

    def __call__(self, z: Tensor, t, cond: Tensor) -> Tensor:
        """Predict the noise in z at timesteps t given conditioning cond.

        z: (B, flat); t: (B,) integers in [1, T]; cond: (B, d) or (1, d).
        """
        temb = Tensor(sinusoidal_embedding(t, self.temb_dim))
        h = self.input(z)
        for lin, tp, cp in zip(self.hidden, self.time_proj, self.cond_proj):
            h = (lin(h) + tp(temb) + cp(cond)).gelu()
        return self.output(h)


def noisy_sample(schedule: NoiseSchedule, x0_flat: np.ndarray, t: np.ndarray,
                 eps: np.ndarray) -> np.ndarray:
    """Forward-process sample z_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps."""
    ab = schedule.alpha_bars[t - 1].reshape(-1, 1)
    return np.sqrt(ab) * x0_flat + np.sqrt(1.0 - ab) * eps


def generation_loss(denoiser: ToyDenoiser, schedule: NoiseSchedule,
                    x0: np.ndarray, cond: Tensor, t, eps: np.ndarray) -> Tensor:
    """Noise-prediction objective: mean over the batch of the squared error
    norm between the true and predicted noise."""
    t = np.asarray(t, dtype=np.int64).reshape(-1)
    if t.min() < 1 or t.max() > schedule.steps:
        raise ValueError(f"timestep outside [1, {schedule.steps}]")
    b = len(t)
    x0_flat = np.asarray(x0, dtype=np.float64).reshape(b, -1)
    eps_flat = np.asarray(eps, dtype=np.float64).reshape(b, -1)
    z = noisy_sample(schedule, x0_flat, t, eps_flat)
    pred = denoiser(Tensor(z), t, cond)
    diff = pred - eps_flat
    return (diff * diff).sum(axis=1).mean()


def train_denoiser(denoiser: ToyDenoiser, schedule: NoiseSchedule,
                   images: np.ndarray, conds: np.ndarray, steps: int,
                   rng: Rng, lr: float = 1e-3, batch_size: int = 16,
                   clip_norm: float = 5.0):
    """Fit the denoiser on (image, conditioning) pairs; returns history.

    conds holds one conditioning vector per image; conditioning tensors are
    treated as constants here (train the generator, not the concepts).
    """
    n = len(images)
    flats = np.asarray(images, dtype=np.float64).reshape(n, -1)
    params = list(denoiser.params().values())
    opt = Adam(params, lr=lr)
    history = []
    for step in range(steps):
        idx = rng.integers(0, n, (batch_size,))
        t = rng.integers(1, schedule.steps + 1, (batch_size,))
        eps = rng.normal(0, 1, (batch_size, denoiser.flat_dim))
        loss = generation_loss(denoiser, schedule, flats[idx],
                               Tensor(conds[idx]), t, eps)
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(f"denoiser loss became {value} at step {step}")
        loss.backward()
        clip_grad_norm(params, clip_norm)
        opt.step()
        history.append(value)
    return history


def sample_generation(denoiser: ToyDenoiser, schedule: NoiseSchedule,
                      cond: Tensor, rng: Rng, n_samples: int = 1) -> np.ndarray:
    """Ancestral reverse-process sampling; returns (n, H, W, C) in [0, 1]."""
    flat = denoiser.flat_dim
    z = rng.normal(0, 1, (n_samples, flat))
    with no_grad():
        for step in range(schedule.steps, 0, -1):
            t = np.full(n_samples, step, dtype=np.int64)
            eps_hat = denoiser(Tensor(z), t, cond).data
            a = schedule.alphas[step - 1]
            ab = schedule.alpha_bars[step - 1]
            z = (z - (1.0 - a) / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(a)
            if step > 1:
                ab_prev = schedule.alpha_bars[step - 2]
                sigma = np.sqrt((1.0 - ab_prev) / (1.0 - ab) * (1.0 - a))
                z = z + sigma * rng.normal(0, 1, (n_samples, flat))
    images = z.reshape(n_samples, denoiser.image_hw, denoiser.image_hw,
                       denoiser.channels)
    return np.clip(images, 0.0, 1.0)


def make_solid_images(color, n: int, rng: Rng, jitter: float = 0.02,
                      hw: int = 8) -> np.ndarray:
    """Near-solid-color training images with slight per-pixel jitter."""
    base = np.broadcast_to(np.asarray(color, dtype=np.float64),
                           (n, hw, hw, 3)).copy()
    base += rng.normal(0, jitter, base.shape)
    return np.clip(base, 0.0, 1.0)


def write_ppm(path: str, image: np.ndarray):
    """8-bit binary PPM export of one (H, W, 3) image in [0, 1]."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"PPM export needs (H, W, 3), got {arr.shape}")
    h, w = arr.shape[:2]
    payload = (np.clip(arr, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(payload.tobytes())
