"""Ground-truth target assembly for the detection losses.

Each annotated object is assigned to exactly one region: the patch cell
containing its box center.  Scene generation guarantees those cells are
distinct within a scene, so the assignment is collision-free by
construction.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class SceneTargets:
    """Per-scene targets, reusable across batches."""
    cls: np.ndarray        # (R, K) 0/1
    regions: np.ndarray    # (n,) assigned region per object kept
    boxes: np.ndarray      # (n, 4) pixel corners
    masks: np.ndarray      # (n, H, W) float 0/1


@dataclass
class DetectionTargets:
    cls: np.ndarray        # (B, R, K)
    b_idx: np.ndarray      # (A,)
    r_idx: np.ndarray      # (A,)
    boxes: np.ndarray      # (A, 4)
    masks: np.ndarray      # (A, H, W)

    @property
    def count(self) -> int:
        return len(self.r_idx)


def scene_targets(model, scene, class_ids) -> SceneTargets:
    """Targets for one scene against the prompt's class list.

    Objects whose class is absent from the prompt contribute nothing.
    """
    column = {cid: k for k, cid in enumerate(class_ids)}
    r = model.config.num_regions
    cls = np.zeros((r, len(class_ids)))
    regions, boxes, masks = [], [], []
    for j, label in enumerate(scene.labels):
        k = column.get(int(label))
        if k is None:
            continue
        region = model.center_region(scene.boxes[j])
        cls[region, k] = 1.0
        regions.append(region)
        boxes.append(scene.boxes[j])
        masks.append(scene.masks[j].astype(np.float64))
    h = w = model.config.image_size
    return SceneTargets(
        cls=cls,
        regions=np.asarray(regions, dtype=np.int64),
        boxes=np.asarray(boxes, dtype=np.float64).reshape(-1, 4),
        masks=(np.stack(masks) if masks else np.zeros((0, h, w))),
    )


def batch_targets(per_scene) -> DetectionTargets:
    b_idx = np.concatenate([np.full(len(t.regions), b, dtype=np.int64)
                            for b, t in enumerate(per_scene)]) \
        if per_scene else np.zeros(0, dtype=np.int64)
    return DetectionTargets(
        cls=np.stack([t.cls for t in per_scene]),
        b_idx=b_idx,
        r_idx=np.concatenate([t.regions for t in per_scene]),
        boxes=np.concatenate([t.boxes for t in per_scene]),
        masks=np.concatenate([t.masks for t in per_scene]),
    )


def build_targets(model, scenes, class_ids) -> DetectionTargets:
    return batch_targets([scene_targets(model, s, class_ids) for s in scenes])
