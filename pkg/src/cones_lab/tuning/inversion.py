"""Textual inversion, both adaptations.

Detection mode learns M pseudo-word embeddings per class that replace the
class name inside the frozen text encoder and train on detection losses.
Generation mode learns pseudo-word embeddings whose mean conditions the
frozen toy denoiser, trained on the noise-prediction objective, logging
sample color distance at checkpoints so convergence toward the concept's
palette is observable.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor
from ..diffusion import generation_loss, sample_generation
from ..errors import DivergenceError, FreezeViolation
from ..model import pseudoword_prompt
from ..optim import Adam, clip_grad_norm
from ..rng import Rng
from .common import OptConfig, TuningRun, partition_checksums, \
    require_all_frozen, run_detection_tuning
from .prompt import _override_prompt


def textual_inversion_detection(model, class_ids, m: int, splits,
                                loss_selection=("cls", "bbox", "mask"),
                                optcfg: OptConfig = None,
                                vocab=None) -> TuningRun:
    """M learnable tokens per class stand in for the class name."""
    optcfg = optcfg or OptConfig()
    if vocab is None:
        raise ValueError("textual inversion needs the vocabulary")
    require_all_frozen(model, "textual inversion")
    before = partition_checksums(model)
    class_ids = [int(c) for c in class_ids]

    base, slots = pseudoword_prompt(vocab, class_ids, m)
    d = model.config.embed_dim
    init = Rng(optcfg.seed).spawn("textinv/init")
    leaf = Tensor(init.normal(0.0, 0.02, (len(class_ids), m, d)),
                  requires_grad=True)
    result = run_detection_tuning(
        model, splits, class_ids, method="textinv",
        loss_selection=loss_selection, optcfg=optcfg,
        leaves={"pseudo_words": leaf},
        make_prompt=lambda: _override_prompt(base, slots, leaf),
        cache_image_prefix=True)
    if partition_checksums(model) != before:
        raise FreezeViolation("textual inversion modified frozen model weights")
    leaf.requires_grad = False
    return TuningRun(
        method="textinv", loss_selection=tuple(loss_selection),
        hyperparameters={"lr": optcfg.lr, "steps": optcfg.steps,
                         "tokens_per_class": m, "seed": optcfg.seed},
        unfrozen_parameters=int(leaf.size), history=result["history"],
        val_history=result["val_history"], best_step=result["best_step"],
        val_metric=result["val_metric"], embeddings=leaf,
        extra={"slots": slots, "text_evals": result["text_evals"]})


def textual_inversion_generation(denoiser, schedule, images, m: int,
                                 optcfg: OptConfig = None,
                                 checkpoint_every: int = 0,
                                 samples_per_checkpoint: int = 8) -> TuningRun:
    """Learn pseudo-word embeddings for one visual concept through the
    frozen denoiser; the conditioning vector is their mean."""
    optcfg = optcfg or OptConfig()
    if m < 1:
        raise ValueError("need at least one pseudo-word")
    for name, p in denoiser.params().items():
        if p.requires_grad:
            raise FreezeViolation(f"denoiser parameter {name} is trainable; "
                                  "freeze the generator before inversion")
    images = np.asarray(images, dtype=np.float64)
    palette = images.reshape(len(images), -1, 3).mean(axis=(0, 1))

    frozen = [p.data.copy() for p in denoiser.params().values()]
    init = Rng(optcfg.seed).spawn("textinv-gen/init")
    leaf = Tensor(init.normal(0.0, 0.02, (m, denoiser.cond_dim)),
                  requires_grad=True)
    opt = Adam([leaf], lr=optcfg.lr, weight_decay=optcfg.weight_decay)
    rng = Rng(optcfg.seed).spawn("textinv-gen/batches")

    def color_distance():
        cond = Tensor(leaf.data.mean(axis=0, keepdims=True))
        samples = sample_generation(denoiser, schedule, cond,
                                    Rng(optcfg.seed).spawn("textinv-gen/eval"),
                                    samples_per_checkpoint)
        mean_rgb = samples.mean(axis=(0, 1, 2))
        return float(np.linalg.norm(mean_rgb - palette))

    history = []
    checkpoints = [{"step": 0, "color_distance": color_distance()}]
    for step in range(optcfg.steps):
        idx = rng.integers(0, len(images), (optcfg.batch_size,))
        t = rng.integers(1, schedule.steps + 1, (optcfg.batch_size,))
        eps = rng.normal(0, 1, (optcfg.batch_size, denoiser.flat_dim))
        cond = leaf.mean(axis=0).reshape((1, denoiser.cond_dim))
        loss = generation_loss(denoiser, schedule, images[idx], cond, t, eps)
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(f"inversion loss became {value} at step {step}")
        loss.backward()
        clip_grad_norm([leaf], optcfg.clip_norm)
        opt.step()
        history.append({"step": step, "loss": value})
        if checkpoint_every > 0 and (step + 1) % checkpoint_every == 0:
            checkpoints.append({"step": step + 1,
                                "color_distance": color_distance()})
    for p, saved in zip(denoiser.params().values(), frozen):
        if not np.array_equal(p.data, saved):
            raise FreezeViolation("denoiser weights changed during inversion")
    if checkpoints[-1]["step"] != optcfg.steps:
        checkpoints.append({"step": optcfg.steps,
                            "color_distance": color_distance()})
    leaf.requires_grad = False
    return TuningRun(
        method="textinv-gen", loss_selection=("gen",),
        hyperparameters={"lr": optcfg.lr, "steps": optcfg.steps,
                         "tokens_per_class": m, "seed": optcfg.seed},
        unfrozen_parameters=int(leaf.size), history=history,
        val_metric=checkpoints[-1]["color_distance"], embeddings=leaf,
        extra={"checkpoints": checkpoints, "palette": palette.tolist()})
