"""Concept-embedding search: optimize per-class prompt matrices directly
against the frozen grounding model (stage 1), then optionally unfreeze the
non-text weights around the fixed concepts (stage 2).

Stage 1 never touches the text encoder: the concept matrices are fed
straight to the fusion interface, so the text tower is skipped entirely and
the per-step cost drops accordingly.  Both stages return best-on-validation
states and prove their freeze contracts at every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor
from ..errors import FreezeViolation
from ..model import ConceptPrompt
from .common import (OptConfig, TuningRun, array_checksum,
                     partition_checksums, require_all_frozen,
                     run_detection_tuning)

INIT_SCHEMES = ("gaussian", "copy_text")

# stage 2 moves whole encoder stacks, so it defaults to a gentler rate
# than the embedding-only searches
STAGE2_LR = 1e-5


def default_stage2_config() -> "OptConfig":
    return OptConfig(lr=STAGE2_LR)


@dataclass
class ConceptEmbeddings:
    embeddings: Tensor               # (K, M, d)
    class_ids: tuple
    scheme: str

    def __post_init__(self):
        self.class_ids = tuple(int(c) for c in self.class_ids)
        if self.embeddings.data.ndim != 3:
            raise ValueError("concept block must be (classes, tokens, dim)")
        if self.embeddings.shape[0] != len(self.class_ids):
            raise ValueError("one matrix per class required")
        if not np.isfinite(self.embeddings.data).all():
            raise ValueError("concept embeddings must be finite")

    @property
    def tokens_per_class(self) -> int:
        return self.embeddings.shape[1]

    def prompt(self) -> ConceptPrompt:
        return ConceptPrompt(self.embeddings, list(self.class_ids))

    def copy(self, requires_grad: bool = False) -> "ConceptEmbeddings":
        t = Tensor(self.embeddings.data.copy(), requires_grad=requires_grad)
        return ConceptEmbeddings(t, self.class_ids, self.scheme)

    def checksum(self) -> str:
        return array_checksum([self.embeddings.data])


def init_concept_embeddings(class_ids, m: int, d: int, rng,
                            scheme: str = "gaussian",
                            model=None, vocab=None) -> ConceptEmbeddings:
    """Fresh concept block, K x M x d.

    gaussian: N(0, 0.02) entries.  copy_text: every slot starts from the
    mean frozen token embedding of the class name (model and vocab needed).
    """
    class_ids = [int(c) for c in class_ids]
    if not class_ids or m < 1 or d < 1:
        raise ValueError("need at least one class, one token, one dimension")
    if scheme == "gaussian":
        block = rng.normal(0.0, 0.02, (len(class_ids), m, d))
    elif scheme == "copy_text":
        if model is None or vocab is None:
            raise ValueError("copy_text scheme needs model and vocab")
        table = model.parameters()["text.token_embed"].data
        block = np.zeros((len(class_ids), m, d))
        for k, cid in enumerate(class_ids):
            token_ids = vocab.encode_class(cid)
            block[k, :, :] = table[token_ids].mean(axis=0)
    else:
        raise ValueError(f"unknown init scheme {scheme!r}; "
                         f"expected one of {INIT_SCHEMES}")
    return ConceptEmbeddings(Tensor(block), tuple(class_ids), scheme)


def search_concept_embeddings(model, c_init: ConceptEmbeddings, splits,
                              loss_selection=("cls", "bbox", "mask"),
                              optcfg: OptConfig = None) -> TuningRun:
    """Stage 1: every model parameter frozen, only the concepts move."""
    optcfg = optcfg or OptConfig()
    require_all_frozen(model, "concept search")
    before = partition_checksums(model)

    c_star = c_init.copy(requires_grad=True)
    prompt = c_star.prompt()
    result = run_detection_tuning(
        model, splits, c_star.class_ids, method="cones",
        loss_selection=loss_selection, optcfg=optcfg,
        leaves={"concepts": c_star.embeddings},
        make_prompt=lambda: prompt,
        cache_image_prefix=True, forbid_text_eval=True)

    if partition_checksums(model) != before:
        raise FreezeViolation("concept search modified frozen model weights")
    c_star.embeddings.requires_grad = False
    k, m, d = c_star.embeddings.shape
    return TuningRun(
        method="cones", loss_selection=tuple(loss_selection),
        hyperparameters={"lr": optcfg.lr, "steps": optcfg.steps,
                         "tokens_per_class": m, "seed": optcfg.seed},
        unfrozen_parameters=k * m * d, history=result["history"],
        val_history=result["val_history"], best_step=result["best_step"],
        val_metric=result["val_metric"], embeddings=c_star,
        extra={"text_evals": result["text_evals"]})


def finetune_with_embeddings(model, c_star: ConceptEmbeddings, splits,
                             loss_selection=("cls", "bbox", "mask"),
                             optcfg: OptConfig = None) -> TuningRun:
    """Stage 2: concepts fixed, image/fusion/heads unfrozen, text untouched."""
    optcfg = optcfg or default_stage2_config()
    frozen = c_star.copy(requires_grad=False)
    concept_sum_before = frozen.checksum()
    text_before = partition_checksums(model)["text"]

    model.set_trainable("image", "fusion", "heads")
    params = model.parameters()
    trainable = {n: t for n, t in params.items() if t.requires_grad}
    for name in trainable:
        if model.partition_of(name) == "text":
            raise FreezeViolation(f"text parameter {name!r} in optimizer set")
    counts = model.count_parameters()
    optimizer_total = sum(t.size for t in trainable.values())
    if optimizer_total != counts["total"] - counts["text"]:
        raise FreezeViolation(
            f"optimizer holds {optimizer_total} scalars, expected "
            f"total - text = {counts['total'] - counts['text']}")

    prompt = frozen.prompt()
    ordered = [trainable[n] for n in sorted(trainable)]
    result = run_detection_tuning(
        model, splits, frozen.class_ids, method="cones-stage2",
        loss_selection=loss_selection, optcfg=optcfg, leaves={},
        make_prompt=lambda: prompt, optimizer_model_params=ordered,
        cache_image_prefix=False, forbid_text_eval=True)

    if frozen.checksum() != concept_sum_before:
        raise FreezeViolation("stage 2 modified the fixed concept embeddings")
    if partition_checksums(model)["text"] != text_before:
        raise FreezeViolation("stage 2 modified text-encoder weights")
    model.freeze_all()
    return TuningRun(
        method="cones-stage2", loss_selection=tuple(loss_selection),
        hyperparameters={"lr": optcfg.lr, "steps": optcfg.steps,
                         "seed": optcfg.seed},
        unfrozen_parameters=optimizer_total, history=result["history"],
        val_history=result["val_history"], best_step=result["best_step"],
        val_metric=result["val_metric"], embeddings=frozen,
        extra={"text_evals": result["text_evals"],
               "optimizer_total": optimizer_total,
               "model_total": counts["total"]})
