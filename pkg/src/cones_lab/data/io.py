"""Dataset persistence.

Layout on disk:
    root/
      meta.json                  {version, seed, config}
      train/ val/ test/
        annotations.json         {version, vocabulary, scenes: [...]}
        scene_00000.tsr          image tensor, float64
        scene_00000_mask_00.tsr  one uint8 mask per annotated object

Round trips are bit-identical.  Loads validate schema version first, then
required fields, naming the offending field and scene index on failure.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..tensor_io import read_tensor, write_tensor
from .scenes import Scene
from .splits import DatasetSplits
from .vocab import Vocabulary

SCHEMA_VERSION = 1
_SCENE_FIELDS = ("image_file", "boxes", "labels", "mask_files", "caption_token_ids")


class SchemaError(ValueError):
    pass


def save_dataset(splits: DatasetSplits, root) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "meta.json").write_text(json.dumps(
        {"version": SCHEMA_VERSION, "seed": splits.seed, "config": splits.config},
        indent=1, sort_keys=True))
    for name in ("train", "val", "test"):
        split_dir = root / name
        split_dir.mkdir(exist_ok=True)
        records = []
        for i, scene in enumerate(splits.split(name)):
            image_file = f"scene_{i:05d}.tsr"
            write_tensor(split_dir / image_file, scene.image, name=f"{name}/{i}/image")
            mask_files = []
            for j, mask in enumerate(scene.masks):
                mf = f"scene_{i:05d}_mask_{j:02d}.tsr"
                write_tensor(split_dir / mf, mask.astype(np.uint8), name=f"{name}/{i}/mask{j}")
                mask_files.append(mf)
            records.append({
                "image_file": image_file,
                "boxes": [list(b) for b in scene.boxes],
                "labels": [int(l) for l in scene.labels],
                "mask_files": mask_files,
                "caption_token_ids": [int(t) for t in scene.caption_token_ids],
            })
        (split_dir / "annotations.json").write_text(json.dumps(
            {"version": SCHEMA_VERSION,
             "vocabulary": json.loads(json.dumps(splits.config["vocabulary"])),
             "scenes": records},
            indent=1, sort_keys=True))


def _check_version(blob: dict, path) -> None:
    version = blob.get("version")
    if version is None:
        raise SchemaError(f"{path}: missing field 'version'")
    if version > SCHEMA_VERSION:
        raise SchemaError(f"{path}: schema version {version} is newer than "
                          f"supported version {SCHEMA_VERSION}")


def _load_split(split_dir: Path) -> list:
    ann_path = split_dir / "annotations.json"
    try:
        blob = json.loads(ann_path.read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"{ann_path}: unparseable annotation JSON: {e}") from None
    _check_version(blob, ann_path)
    if "scenes" not in blob:
        raise SchemaError(f"{ann_path}: missing field 'scenes'")
    scenes = []
    for i, rec in enumerate(blob["scenes"]):
        for f in _SCENE_FIELDS:
            if f not in rec:
                raise SchemaError(f"{ann_path}: scene {i} missing field {f!r}")
        image, _ = read_tensor(split_dir / rec["image_file"])
        masks = [read_tensor(split_dir / mf)[0] for mf in rec["mask_files"]]
        if len(masks) != len(rec["boxes"]) or len(rec["labels"]) != len(rec["boxes"]):
            raise SchemaError(f"{ann_path}: scene {i} has inconsistent "
                              f"boxes/labels/mask_files lengths")
        scenes.append(Scene(
            image=image,
            boxes=[tuple(float(v) for v in b) for b in rec["boxes"]],
            labels=[int(l) for l in rec["labels"]],
            masks=masks,
            caption_token_ids=[int(t) for t in rec["caption_token_ids"]],
        ))
    return scenes


def load_dataset(root) -> DatasetSplits:
    root = Path(root)
    meta_path = root / "meta.json"
    try:
        meta = json.loads(meta_path.read_text())
    except FileNotFoundError:
        raise SchemaError(f"{meta_path}: dataset metadata not found") from None
    except json.JSONDecodeError as e:
        raise SchemaError(f"{meta_path}: unparseable metadata JSON: {e}") from None
    _check_version(meta, meta_path)
    for f in ("seed", "config"):
        if f not in meta:
            raise SchemaError(f"{meta_path}: missing field {f!r}")
    parts = {name: _load_split(root / name) for name in ("train", "val", "test")}
    return DatasetSplits(train=parts["train"], val=parts["val"], test=parts["test"],
                         seed=int(meta["seed"]), config=meta["config"])


def vocabulary_of(splits: DatasetSplits) -> Vocabulary:
    return Vocabulary.from_json(splits.config["vocabulary"])
