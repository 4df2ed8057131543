"""Checkpointing: one tensor file per parameter plus a JSON manifest.

The manifest records the model config, the seed the model was built from,
the training step, each parameter's partition, and its frozen flag, so a
restored model is bit-identical and resumes with the same freeze state.
"""

import json
import os

import numpy as np

from ..autodiff import Tensor
from ..rng import Rng
from ..tensor_io import read_tensor, write_tensor
from .config import VlmConfig
from .vlm import VlmModel

MANIFEST = "manifest.json"


def _tensor_filename(name: str) -> str:
    return name.replace(".", "__") + ".tsr"


def save_checkpoint(model: VlmModel, path: str, seed: int, step: int = 0,
                    extra: dict = None):
    os.makedirs(path, exist_ok=True)
    params = model.parameters()
    manifest = {
        "config": model.config.to_json(),
        "seed": seed,
        "step": step,
        "partitions": {n: VlmModel.partition_of(n) for n in params},
        "frozen": {n: not t.requires_grad for n, t in params.items()},
        "tau_trainable": model.tau.requires_grad,
        "extra": extra or {},
    }
    for name, t in params.items():
        write_tensor(os.path.join(path, _tensor_filename(name)), t.data, name=name)
    write_tensor(os.path.join(path, "calibration__tau.tsr"), model.tau.data,
                 name="calibration.tau")
    with open(os.path.join(path, MANIFEST), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def load_checkpoint(path: str):
    """Returns (model, manifest). Parameter arrays match the saved bytes."""
    manifest_path = os.path.join(path, MANIFEST)
    if not os.path.exists(manifest_path):
        raise FileNotFoundError(f"no checkpoint manifest at {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)

    config = VlmConfig.from_json(manifest["config"])
    model = VlmModel(config, Rng(manifest["seed"]))
    params = model.parameters()
    saved = set(manifest["partitions"])
    have = set(params)
    if saved != have:
        missing = sorted(have - saved) + sorted(saved - have)
        raise ValueError(f"checkpoint parameter set mismatch: {missing[:4]}")

    for name, t in params.items():
        data, stored_name = read_tensor(os.path.join(path, _tensor_filename(name)))
        if stored_name != name:
            raise ValueError(f"tensor file for {name} holds {stored_name}")
        if data.shape != t.data.shape:
            raise ValueError(f"shape mismatch for {name}: "
                             f"{data.shape} vs {t.data.shape}")
        t.data[...] = data
        t.requires_grad = not manifest["frozen"][name]

    tau, _ = read_tensor(os.path.join(path, "calibration__tau.tsr"))
    model.tau.data[...] = tau
    model.tau.requires_grad = manifest.get("tau_trainable", False)
    return model, manifest
