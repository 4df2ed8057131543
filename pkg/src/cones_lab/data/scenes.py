"""Synthetic grounding scenes.

Each scene renders 1-4 colored primitives onto a dark canvas and annotates
them with pixel-tight boxes, binary masks, and a caption naming the present
classes.  Placement enforces pixel-disjoint masks, a pairwise box-IoU cap,
and distinct patch cells for box centers (the detection head assigns each
ground-truth box to the patch cell containing its center, so two boxes in one
cell would make the assignment ambiguous).

Annotations are derived from the noiseless render; Gaussian pixel noise is
added afterwards and never moves a box or mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rng import Rng
from .vocab import COLOR_RGB, Vocabulary, build_default_vocabulary


class GenerationError(RuntimeError):
    pass


@dataclass
class SceneConfig:
    vocabulary: Vocabulary = field(default_factory=build_default_vocabulary)
    class_ids: list = None          # palette; defaults to the in-domain classes
    height: int = 32
    width: int = 32
    min_objects: int = 1
    max_objects: int = 4
    max_box_iou: float = 0.3
    patch: int = 4
    noise_sigma: float = 0.02
    background: float = 0.08

    def __post_init__(self):
        if self.class_ids is None:
            self.class_ids = self.vocabulary.in_domain_ids()


@dataclass
class Scene:
    image: np.ndarray                # H x W x 3 float64 in [0, 1]
    boxes: list                      # (x_min, y_min, x_max, y_max) pixel units
    labels: list                     # class id per box
    masks: list                      # H x W uint8 per box
    caption_token_ids: list

    def num_objects(self) -> int:
        return len(self.boxes)


def box_iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union if union > 0 else 0.0


def _tight_box(mask: np.ndarray):
    ys, xs = np.nonzero(mask)
    return (float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))


def _shape_mask(shape: str, cx: float, cy: float, size: float, aspect: float,
                X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    dx, dy = X - cx, Y - cy
    if shape == "circle":
        hit = dx * dx + dy * dy <= size * size
    elif shape == "square":
        hit = np.maximum(np.abs(dx), np.abs(dy)) <= size
    elif shape == "triangle":
        # isoceles, apex up: width grows linearly from apex to base
        hit = (dy >= -size) & (dy <= size) & (np.abs(dx) <= (dy + size) * 0.5)
    elif shape == "striped ellipse":
        inside = (dx / size) ** 2 + (dy / (size * aspect)) ** 2 <= 1.0
        hit = inside & ((X + Y) % 3 != 0)
    elif shape == "ring":
        d2 = dx * dx + dy * dy
        inner = max(1.0, size - 1.4 - 0.8 * aspect)
        hit = (d2 <= size * size) & (d2 >= inner * inner)
    elif shape == "checker blob":
        inside = np.maximum(np.abs(dx), np.abs(dy)) <= size
        hit = inside & (((X // 2) + (Y // 2)) % 2 == 0)
    else:
        raise GenerationError(f"no renderer for shape {shape!r}")
    return hit.astype(np.uint8)


_SIZE_RANGE = {
    "circle": (2.2, 4.6),
    "square": (1.8, 4.2),
    "triangle": (2.4, 5.0),
    "striped ellipse": (2.8, 5.0),
    "ring": (2.8, 4.8),
    "checker blob": (2.2, 4.0),
}


def generate_scene(config: SceneConfig, rng: Rng) -> Scene:
    vocab = config.vocabulary
    if not config.class_ids:
        raise ValueError("scene palette is empty: need at least one class id")
    for cid in config.class_ids:
        if not 0 <= cid < vocab.num_classes:
            raise ValueError(f"class id {cid} not in vocabulary of {vocab.num_classes}")

    H, W = config.height, config.width
    Y, X = np.mgrid[0:H, 0:W]
    n_objects = rng.integers(config.min_objects, config.max_objects + 1)

    # round-robin palette offset keeps long-run class frequencies uniform
    base = rng.integers(0, len(config.class_ids))
    wanted = [config.class_ids[(base + k) % len(config.class_ids)] for k in range(n_objects)]

    occupied = np.zeros((H, W), dtype=bool)
    boxes, labels, masks, cells = [], [], [], set()
    for cid in wanted:
        spec = vocab.classes[cid]
        lo, hi = _SIZE_RANGE[spec.shape]
        placed = False
        for attempt in range(500):
            size = rng.uniform(lo, hi if attempt < 100 else (lo + hi) / 2)
            aspect = rng.uniform(0.55, 0.8)
            margin = size + 1.5
            cx = rng.uniform(margin, W - margin)
            cy = rng.uniform(margin, H - margin)
            mask = _shape_mask(spec.shape, cx, cy, size, aspect, X, Y)
            if mask.sum() < 4:
                continue
            if (occupied & mask.astype(bool)).any():
                continue
            box = _tight_box(mask)
            if any(box_iou(box, b) > config.max_box_iou for b in boxes):
                continue
            cell = (int((box[0] + box[2]) / 2 // config.patch),
                    int((box[1] + box[3]) / 2 // config.patch))
            if cell in cells:
                continue
            occupied |= mask.astype(bool)
            boxes.append(box)
            labels.append(int(cid))
            masks.append(mask)
            cells.add(cell)
            placed = True
            break
        if not placed:
            raise GenerationError(f"could not place object of class {spec.name!r}")

    image = np.full((H, W, 3), config.background, dtype=np.float64)
    for mask, cid in zip(masks, labels):
        image[mask.astype(bool)] = COLOR_RGB[vocab.classes[cid].color]
    if config.noise_sigma > 0:
        image = image + rng.normal(0.0, config.noise_sigma, image.shape)
    image = np.clip(image, 0.0, 1.0)

    return Scene(image=image, boxes=boxes, labels=labels, masks=masks,
                 caption_token_ids=vocab.caption_for(labels))
