"""Linear probing and full fine-tuning baselines.

The probe trains only the alignment projections and the last linear layer
of the box and mask heads; everything upstream stays frozen so the run
measures how far fixed features go.  Full fine-tuning opens every model
partition, text encoder included, and serves as the upper-cost baseline.
"""

from __future__ import annotations

from ..errors import FreezeViolation
from ..model import PARTITIONS, detection_prompt
from .common import OptConfig, TuningRun, partition_checksums, \
    require_all_frozen, run_detection_tuning

# loss -> head tensors it can reach; the classification loss flows through
# the alignment projections, box/mask losses through their head's fc2
_PROBE_LAYERS = {
    "cls": ("heads.proj_v.w", "heads.proj_p.w"),
    "bbox": ("heads.box.fc2.w", "heads.box.fc2.b"),
    "mask": ("heads.mask.fc2.w", "heads.mask.fc2.b"),
}


def linear_probe(model, class_ids, splits,
                 loss_selection=("cls", "bbox", "mask"),
                 optcfg: OptConfig = None, vocab=None) -> TuningRun:
    """Train the last linear layers on frozen features with a plain
    class-name prompt."""
    optcfg = optcfg or OptConfig()
    if vocab is None:
        raise ValueError("linear probe needs the vocabulary")
    loss_selection = tuple(loss_selection)
    require_all_frozen(model, "linear probe")
    before = partition_checksums(model)
    class_ids = [int(c) for c in class_ids]

    names = []
    for loss in loss_selection:
        if loss not in _PROBE_LAYERS:
            raise ValueError(f"unknown loss {loss!r}")
        names.extend(_PROBE_LAYERS[loss])
    named = model.parameters()
    probe_params = [named[n] for n in names]
    for t in probe_params:
        t.requires_grad = True

    prompt = detection_prompt(vocab, class_ids)
    try:
        result = run_detection_tuning(
            model, splits, class_ids, method="linear",
            loss_selection=loss_selection, optcfg=optcfg, leaves={},
            make_prompt=lambda: prompt,
            optimizer_model_params=probe_params,
            cache_image_prefix=True)
    finally:
        model.freeze_all()
    after = partition_checksums(model)
    for part in ("image", "text", "fusion"):
        if after[part] != before[part]:
            raise FreezeViolation(f"linear probe modified the {part} partition")
    return TuningRun(
        method="linear", loss_selection=loss_selection,
        hyperparameters={"lr": optcfg.lr, "steps": optcfg.steps,
                         "seed": optcfg.seed},
        unfrozen_parameters=sum(t.size for t in probe_params),
        history=result["history"], val_history=result["val_history"],
        best_step=result["best_step"], val_metric=result["val_metric"],
        extra={"trained_layers": names, "text_evals": result["text_evals"]})


def full_finetune(model, class_ids, splits,
                  loss_selection=("cls", "bbox", "mask"),
                  optcfg: OptConfig = None, vocab=None) -> TuningRun:
    """Open all four partitions and train end to end on detection losses."""
    optcfg = optcfg or OptConfig()
    if vocab is None:
        raise ValueError("full fine-tuning needs the vocabulary")
    require_all_frozen(model, "full fine-tune")
    class_ids = [int(c) for c in class_ids]

    model.set_trainable(*PARTITIONS)
    named = model.parameters()
    all_params = [named[n] for n in sorted(named)]
    counts = model.count_parameters()
    if sum(t.size for t in all_params) != counts["total"]:
        raise FreezeViolation("optimizer set does not cover the model")

    prompt = detection_prompt(vocab, class_ids)
    try:
        result = run_detection_tuning(
            model, splits, class_ids, method="full",
            loss_selection=tuple(loss_selection), optcfg=optcfg, leaves={},
            make_prompt=lambda: prompt,
            optimizer_model_params=all_params,
            cache_image_prefix=False)
    finally:
        model.freeze_all()
    return TuningRun(
        method="full", loss_selection=tuple(loss_selection),
        hyperparameters={"lr": optcfg.lr, "steps": optcfg.steps,
                         "seed": optcfg.seed},
        unfrozen_parameters=counts["total"],
        history=result["history"], val_history=result["val_history"],
        best_step=result["best_step"], val_metric=result["val_metric"],
        extra={"text_evals": result["text_evals"]})
