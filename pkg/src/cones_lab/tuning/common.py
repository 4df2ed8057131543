"""Shared machinery for the adaptation methods: optimizer configuration,
run records, freeze checksums, and the detection tuning loop they all use.

The loop trains a small set of leaf tensors (embeddings and/or selected
model weights) against the detection losses while proving, every step, that
nothing outside the optimizer set received a gradient.  Validation AP is
tracked so callers can return the best-on-validation state rather than the
last one.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError, FreezeViolation
from ..losses import batch_targets, detection_loss, scene_targets
from ..evaluation import compute_ap, extract_detections, scene_ground_truth
from ..model import PARTITIONS
from ..optim import Adam, clip_grad_norm
from ..rng import Rng

LOSS_ADDITIVITY_TOL = 1e-12


@dataclass
class OptConfig:
    steps: int = 1000
    lr: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 8
    clip_norm: float = 5.0
    seed: int = 0
    eval_every: int = 100            # 0 = validate only at the start and end
    select_best: bool = True         # restore the best-on-validation state
    val_scene_limit: int = 0         # 0 = all validation scenes

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


@dataclass
class TuningRun:
    method: str
    loss_selection: tuple
    hyperparameters: dict
    unfrozen_parameters: int
    history: list = field(default_factory=list)
    val_history: list = field(default_factory=list)
    best_step: int = -1
    val_metric: float = math.nan
    base_checkpoint: str = ""
    embeddings: object = None
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "method": self.method,
            "losses": list(self.loss_selection),
            "unfrozen_parameters": self.unfrozen_parameters,
            "steps": len(self.history),
            "best_step": self.best_step,
            "val_metric": self.val_metric,
            "base_checkpoint": self.base_checkpoint,
        }


def array_checksum(arrays) -> str:
    """Order-sensitive sha256 over the raw bytes of the given arrays."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def partition_checksums(model) -> dict:
    params = model.parameters()
    out = {}
    for part in PARTITIONS:
        names = sorted(n for n in params if model.partition_of(n) == part)
        out[part] = array_checksum(params[n].data for n in names)
    return out


def require_all_frozen(model, who: str):
    for name, t in model.parameters().items():
        if t.requires_grad:
            raise FreezeViolation(f"{who}: model parameter {name!r} is trainable")
    if model.tau.requires_grad:
        raise FreezeViolation(f"{who}: temperature is trainable")


def check_additivity(total, parts):
    recomputed = sum(parts.values())
    if abs(total - recomputed) > LOSS_ADDITIVITY_TOL:
        raise AssertionError(
            f"loss total {total!r} drifted from component sum {recomputed!r}")


class _SceneCache:
    """Patch grids, per-scene targets, and (optionally) frozen pre-fusion
    image streams for one split."""

    def __init__(self, model, scenes, class_ids, cache_prefix: bool):
        self.scenes = scenes
        self.patches = model.patchify(np.stack([s.image for s in scenes])) \
            if scenes else None
        self.targets = [scene_targets(model, s, class_ids) for s in scenes]
        self.prefix = None
        if cache_prefix and scenes:
            chunks = []
            for start in range(0, len(scenes), 32):
                chunks.append(model.image_prefix(
                    self.patches[start:start + 32]).data)
            self.prefix = np.concatenate(chunks)


def validation_ap(model, cache: _SceneCache, prompt, class_ids,
                  limit: int = 0) -> float:
    """Box AP over (a prefix-cached) validation split."""
    from ..autodiff import Tensor
    n = len(cache.scenes) if limit <= 0 else min(limit, len(cache.scenes))
    detections = []
    for start in range(0, n, 16):
        stop = min(start + 16, n)
        prefix = None if cache.prefix is None else Tensor(cache.prefix[start:stop])
        output = model.ground(cache.patches[start:stop], prompt,
                              image_prefix=prefix)
        detections.extend(extract_detections(model, output, class_ids,
                                             scene_offset=start,
                                             with_masks=False))
    gt = scene_ground_truth(cache.scenes[:n], class_ids)
    return compute_ap(detections, gt)["ap"]


def run_detection_tuning(model, splits, class_ids, *, method: str,
                         loss_selection, optcfg: OptConfig, leaves: dict,
                         make_prompt, optimizer_model_params=(),
                         cache_image_prefix: bool = True,
                         forbid_text_eval: bool = False,
                         eval_prompt=None) -> dict:
    """The shared loop.  leaves: {name: Tensor} extra tensors to optimize;
    make_prompt() must return a prompt whose graph reaches every leaf.
    Returns history, val_history, best step/metric, and leaves best values.
    """
    from ..autodiff import Tensor

    loss_selection = tuple(loss_selection)
    if not loss_selection:
        raise ValueError("loss selection must not be empty")
    class_ids = [int(c) for c in class_ids]
    train = splits.split("train")
    val = splits.split("val")
    if not train:
        raise ValueError("empty training split")

    model_params = list(optimizer_model_params)
    model_param_ids = {id(t) for t in model_params}
    leaf_list = list(leaves.values())
    params = leaf_list + model_params
    opt = Adam(params, lr=optcfg.lr, weight_decay=optcfg.weight_decay)

    train_cache = _SceneCache(model, train, class_ids, cache_image_prefix)
    val_cache = _SceneCache(model, val, class_ids, cache_image_prefix) \
        if val else None
    rng = Rng(optcfg.seed).spawn(f"{method}/batches")
    text_evals_before = model.text_eval_count

    def snapshot():
        return [p.data.copy() for p in params]

    def restore(state):
        for p, data in zip(params, state):
            p.data[...] = data

    history, val_history = [], []
    best = {"metric": -math.inf, "step": -1, "state": None}

    def consider(step):
        if val_cache is None:
            return
        prompt = (eval_prompt or make_prompt)()
        metric = validation_ap(model, val_cache, prompt, class_ids,
                               optcfg.val_scene_limit)
        val_history.append({"step": step, "ap": metric})
        if metric > best["metric"]:
            best.update(metric=metric, step=step, state=snapshot())

    consider(0)
    evaluated_at = 0
    for step in range(optcfg.steps):
        idx = rng.integers(0, len(train), (optcfg.batch_size,))
        patches = train_cache.patches[idx]
        prefix = None
        if train_cache.prefix is not None:
            prefix = Tensor(train_cache.prefix[idx])
        targets = batch_targets([train_cache.targets[int(i)] for i in idx])
        prompt = make_prompt()
        output = model.ground(patches, prompt, image_prefix=prefix)
        total, parts = detection_loss(model, output, targets, loss_selection)
        value = total.item()
        part_values = {k: float(v.item()) for k, v in parts.items()}
        check_additivity(value, part_values)
        if not np.isfinite(value):
            raise DivergenceError(f"{method}: loss became {value} at step {step}")
        total.backward()
        for name, t in model.parameters().items():
            if t.grad is not None and id(t) not in model_param_ids:
                raise FreezeViolation(
                    f"{method}: model parameter {name!r} received a gradient")
        for name, t in leaves.items():
            if t.grad is None:
                raise ValueError(
                    f"{method}: losses {loss_selection} never reach "
                    f"the learned tensor {name!r}")
        # a batch with no positive boxes gives some heads nothing to learn
        # from; treat that as a zero gradient rather than a usage error
        for t in model_params:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
        clip_grad_norm(params, optcfg.clip_norm)
        opt.step()
        history.append({"step": step, "loss": value, **part_values})
        if optcfg.eval_every > 0 and (step + 1) % optcfg.eval_every == 0:
            consider(step + 1)
            evaluated_at = step + 1
    if optcfg.steps and evaluated_at != optcfg.steps:
        consider(optcfg.steps)

    if forbid_text_eval and model.text_eval_count != text_evals_before:
        raise FreezeViolation(
            f"{method}: text encoder was evaluated "
            f"{model.text_eval_count - text_evals_before} times")

    if optcfg.select_best and best["state"] is not None:
        restore(best["state"])
    final_metric = best["metric"] if (optcfg.select_best
                                      and best["state"] is not None) else (
        val_history[-1]["ap"] if val_history else math.nan)
    return {
        "history": history,
        "val_history": val_history,
        "best_step": best["step"],
        "val_metric": final_metric,
        "text_evals": model.text_eval_count - text_evals_before,
    }
