"""Prompt tuning: learnable context vectors around the frozen class names,
optimized by backpropagating through the frozen text encoder every step.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor
from ..errors import FreezeViolation
from ..model import TextPrompt, context_prompt, detection_prompt
from ..rng import Rng
from .common import (OptConfig, TuningRun, partition_checksums,
                     require_all_frozen, run_detection_tuning, _SceneCache,
                     validation_ap)


def _override_prompt(base: TextPrompt, slots, leaf: Tensor) -> TextPrompt:
    """Fresh prompt whose placeholder positions read from the current leaf."""
    overrides = {}
    for k, positions in enumerate(slots):
        for j, pos in enumerate(positions):
            overrides[pos] = leaf[k, j]
    return TextPrompt(base.token_ids, base.spans,
                      embedding_overrides=overrides)


def prompt_tuning(model, class_ids, m: int, splits,
                  loss_selection=("cls", "bbox", "mask"),
                  optcfg: OptConfig = None, vocab=None) -> TuningRun:
    """Learn K x m x d context vectors through the frozen text tower.

    m = 0 degenerates to the zero-shot text prompt: nothing to train, and
    reported metrics are the zero-shot metrics by construction.
    """
    optcfg = optcfg or OptConfig()
    if vocab is None:
        raise ValueError("prompt tuning needs the vocabulary")
    if m < 0:
        raise ValueError("m must be >= 0")
    require_all_frozen(model, "prompt tuning")
    before = partition_checksums(model)
    class_ids = [int(c) for c in class_ids]

    if m == 0:
        prompt = detection_prompt(vocab, class_ids)
        val = splits.split("val")
        metric = float("nan")
        if val:
            cache = _SceneCache(model, val, class_ids, cache_prefix=True)
            metric = validation_ap(model, cache, prompt, class_ids,
                                   optcfg.val_scene_limit)
        return TuningRun(
            method="prompt", loss_selection=tuple(loss_selection),
            hyperparameters={"lr": optcfg.lr, "steps": 0,
                             "tokens_per_class": 0, "seed": optcfg.seed},
            unfrozen_parameters=0, val_metric=metric,
            extra={"zero_shot": True})

    base, slots = context_prompt(vocab, class_ids, m)
    d = model.config.embed_dim
    init = Rng(optcfg.seed).spawn("prompt/init")
    leaf = Tensor(init.normal(0.0, 0.02, (len(class_ids), m, d)),
                  requires_grad=True)
    result = run_detection_tuning(
        model, splits, class_ids, method="prompt",
        loss_selection=loss_selection, optcfg=optcfg,
        leaves={"context": leaf},
        make_prompt=lambda: _override_prompt(base, slots, leaf),
        cache_image_prefix=True)
    if partition_checksums(model) != before:
        raise FreezeViolation("prompt tuning modified frozen model weights")
    leaf.requires_grad = False
    return TuningRun(
        method="prompt", loss_selection=tuple(loss_selection),
        hyperparameters={"lr": optcfg.lr, "steps": optcfg.steps,
                         "tokens_per_class": m, "seed": optcfg.seed},
        unfrozen_parameters=int(leaf.size), history=result["history"],
        val_history=result["val_history"], best_step=result["best_step"],
        val_metric=result["val_metric"], embeddings=leaf,
        extra={"slots": slots, "text_evals": result["text_evals"]})
