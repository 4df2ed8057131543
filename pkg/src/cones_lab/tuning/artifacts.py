"""Embedding artifacts: a tensor block plus a JSON sidecar.

A tuning run that produces embeddings is persisted as ``stem.tsr`` holding
the (K, M, d) block and ``stem.json`` recording method, base checkpoint,
class ids, token count, loss selection, seed, and the validation metric.
Round-trips are bit-identical.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from ..autodiff import Tensor
from ..tensor_io import read_tensor, write_tensor
from .common import TuningRun


def save_embedding_artifact(stem: str, run: TuningRun, class_ids) -> dict:
    """Write ``stem.tsr`` + ``stem.json`` for a run that learned embeddings."""
    if run.embeddings is None:
        raise ValueError(f"run {run.method!r} produced no embeddings")
    learned = run.embeddings
    if hasattr(learned, "embeddings"):  # concept container
        learned = learned.embeddings
    if isinstance(learned, Tensor):
        learned = learned.data
    block = np.asarray(learned, dtype=np.float64)
    if block.ndim != 3:
        raise ValueError(f"embedding block must be (K, M, d), got {block.shape}")
    class_ids = [int(c) for c in class_ids]
    if len(class_ids) != block.shape[0]:
        raise ValueError(f"{len(class_ids)} classes for {block.shape[0]} rows")
    meta = {
        "method": run.method,
        "base_checkpoint": run.base_checkpoint,
        "classes": class_ids,
        "M": int(block.shape[1]),
        "losses": list(run.loss_selection),
        "seed": int(run.hyperparameters.get("seed", 0)),
        "val_metric": None if math.isnan(run.val_metric) else float(run.val_metric),
    }
    directory = os.path.dirname(stem)
    if directory:
        os.makedirs(directory, exist_ok=True)
    write_tensor(stem + ".tsr", block, name="embeddings")
    with open(stem + ".json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
    return meta


def load_embedding_artifact(stem: str):
    """Read back (embeddings, meta); validates shape against the sidecar."""
    with open(stem + ".json") as fh:
        meta = json.load(fh)
    block, name = read_tensor(stem + ".tsr")
    if name != "embeddings":
        raise ValueError(f"tensor block at {stem}.tsr holds {name!r}")
    if block.ndim != 3 or block.shape[0] != len(meta["classes"]) \
            or block.shape[1] != meta["M"]:
        raise ValueError(
            f"block shape {block.shape} disagrees with sidecar "
            f"(K={len(meta['classes'])}, M={meta['M']})")
    if not np.isfinite(block).all():
        raise ValueError("embedding block contains non-finite values")
    return block, meta
