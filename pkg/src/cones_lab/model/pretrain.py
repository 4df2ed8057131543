"""Grounded pretraining on the in-domain synthetic scenes.

Every parameter trains, including the alignment temperature.  The prompt is
the full in-domain class list, so each step optimizes region-to-class
alignment, box regression, and mask prediction jointly.
"""

from dataclasses import dataclass, field

import numpy as np

from ..data.io import vocabulary_of
from ..errors import DivergenceError
from ..losses import batch_targets, detection_loss, scene_targets
from ..optim import Adam, clip_grad_norm
from ..rng import Rng
from .prompts import detection_prompt
from .vlm import PARTITIONS, VlmModel


@dataclass
class PretrainConfig:
    steps: int = 3000
    batch_size: int = 8
    lr: float = 1e-3
    weight_decay: float = 0.05
    clip_norm: float = 5.0
    seed: int = 0
    eval_every: int = 0          # 0 = evaluate only at the end
    eval_scene_limit: int = 100
    train_tau: bool = True


@dataclass
class PretrainResult:
    steps: int
    final_loss: float
    val_ap: float
    history: list = field(default_factory=list)
    val_history: list = field(default_factory=list)


def _validate_in_domain(splits):
    vocab = vocabulary_of(splits)
    in_ids = set(vocab.in_domain_ids())
    for name in ("train", "val"):
        for scene in splits.split(name):
            if not set(int(l) for l in scene.labels) <= in_ids:
                raise ValueError(f"{name} split contains out-of-domain classes")


def pretrain_vlm(model: VlmModel, splits, config: PretrainConfig) -> PretrainResult:
    _validate_in_domain(splits)
    vocab = vocabulary_of(splits)
    class_ids = vocab.in_domain_ids()
    prompt = detection_prompt(vocab, class_ids)

    model.set_trainable(*PARTITIONS)
    model.tau.requires_grad = config.train_tau
    params = list(model.parameters().values())
    if config.train_tau:
        params.append(model.tau)
    opt = Adam(params, lr=config.lr, weight_decay=config.weight_decay)

    train = splits.train
    patches = model.patchify(np.stack([s.image for s in train]))
    per_scene = [scene_targets(model, s, class_ids) for s in train]
    rng = Rng(config.seed).spawn("pretrain/batches")

    def val_ap():
        from ..evaluation import evaluate_detection
        scenes = splits.val[:config.eval_scene_limit]
        return evaluate_detection(model, scenes, prompt, class_ids)["ap"]

    result = PretrainResult(steps=config.steps, final_loss=float("nan"), val_ap=float("nan"))
    for step in range(config.steps):
        idx = rng.integers(0, len(train), (config.batch_size,))
        targets = batch_targets([per_scene[i] for i in idx])
        out = model.ground(patches[idx], prompt)
        loss, parts = detection_loss(model, out, targets)
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(f"pretraining loss became {value} at step {step}")
        loss.backward()
        clip_grad_norm(params, config.clip_norm)
        opt.step()
        result.final_loss = value
        result.history.append({"step": step, "loss": value,
                               **{k: v.item() for k, v in parts.items()}})
        if config.eval_every and (step + 1) % config.eval_every == 0:
            result.val_history.append({"step": step + 1, "ap": val_ap()})

    if config.eval_scene_limit > 0:
        result.val_ap = val_ap()
    return result
