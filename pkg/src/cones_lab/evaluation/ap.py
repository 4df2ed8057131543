"""Detection metrics: COCO-style average precision for boxes and masks.

Matching is greedy in confidence order, each ground-truth object consumed by
at most one detection, ties broken by detection input order.  Per-class
precision-recall curves use 101-point interpolation; the headline number
averages the ten IoU thresholds 0.50:0.05:0.95 and AP50 is reported
separately.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

IOU_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)


@dataclass
class Detection:
    scene: int
    class_id: int
    confidence: float
    box: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=np.float64)
        if self.box.shape != (4,):
            raise ValueError(f"box must have 4 coordinates, got {self.box.shape}")
        if self.box[2] < self.box[0] or self.box[3] < self.box[1]:
            raise ValueError("box corners out of order")
        if not np.isfinite(self.confidence):
            raise ValueError("confidence must be finite")


@dataclass
class GroundTruthObject:
    scene: int
    class_id: int
    box: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=np.float64)


def box_iou(a: np.ndarray, b: np.ndarray) -> float:
    iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = iw * ih
    union = ((a[2] - a[0]) * (a[3] - a[1])
             + (b[2] - b[0]) * (b[3] - b[1]) - inter)
    return inter / union if union > 0 else 0.0


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)


def _pair_iou(det: Detection, gt: GroundTruthObject, use_masks: bool) -> float:
    if use_masks:
        if det.mask is None or gt.mask is None:
            return 0.0
        return mask_iou(det.mask, gt.mask)
    return box_iou(det.box, gt.box)


def _interpolated_ap(tp: np.ndarray, n_gt: int) -> float:
    """101-point interpolated area under the precision-recall curve."""
    if n_gt == 0:
        return 0.0
    cum_tp = np.cumsum(tp)
    precision = cum_tp / np.arange(1, len(tp) + 1)
    recall = cum_tp / n_gt
    total = 0.0
    for r in RECALL_POINTS:
        above = precision[recall >= r]
        total += above.max() if above.size else 0.0
    return total / len(RECALL_POINTS)


def _match_class(dets, gts, threshold: float, iou_cache) -> np.ndarray:
    """Greedy confidence-ordered matching; returns tp flags in match order."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    taken = set()
    tp = np.zeros(len(dets))
    for rank, i in enumerate(order):
        best_iou, best_j = threshold, -1
        for j in range(len(gts)):
            if j in taken or gts[j].scene != dets[i].scene:
                continue
            iou = iou_cache[i, j]
            # >= at the threshold, then strictly better; IoU tie keeps the
            # earlier ground-truth object
            if iou >= best_iou and (best_j < 0 or iou > best_iou):
                best_iou, best_j = iou, j
        if best_j >= 0:
            taken.add(best_j)
            tp[rank] = 1.0
    return tp


def compute_ap(detections, ground_truth, iou_thresholds=IOU_THRESHOLDS,
               use_masks: bool = False) -> dict:
    """AP per class plus means over classes with at least one gt object."""
    thresholds = tuple(iou_thresholds)
    if not thresholds or min(thresholds) <= 0 or max(thresholds) > 1:
        raise ValueError(f"iou thresholds must lie in (0, 1]: {thresholds}")
    classes = sorted({g.class_id for g in ground_truth})
    per_class, per_class_50 = {}, {}
    for cid in classes:
        dets = [d for d in detections if d.class_id == cid]
        gts = [g for g in ground_truth if g.class_id == cid]
        iou_cache = np.zeros((len(dets), len(gts)))
        for i, d in enumerate(dets):
            for j, g in enumerate(gts):
                iou_cache[i, j] = _pair_iou(d, g, use_masks)
        values = [_interpolated_ap(_match_class(dets, gts, t, iou_cache),
                                   len(gts)) for t in thresholds]
        per_class[cid] = float(np.mean(values))
        per_class_50[cid] = (float(values[thresholds.index(0.5)])
                             if 0.5 in thresholds else float(values[0]))
    if not classes:
        return {"ap": 0.0, "ap50": 0.0, "per_class": {}, "per_class_ap50": {}}
    return {
        "ap": float(np.mean(list(per_class.values()))),
        "ap50": float(np.mean(list(per_class_50.values()))),
        "per_class": per_class,
        "per_class_ap50": per_class_50,
    }


def mask_ap(detections, ground_truth, iou_thresholds=IOU_THRESHOLDS) -> dict:
    """Identical pipeline to compute_ap with pixel IoU."""
    return compute_ap(detections, ground_truth, iou_thresholds, use_masks=True)


def extract_detections(model, output, class_ids, scene_offset: int = 0,
                       top_k: int = 20, min_confidence: float = 0.05,
                       with_masks: bool = True):
    """Turn one grounding forward pass into ranked Detection records.

    Confidence is the sigmoid of the alignment logit.  Each scene keeps at
    most top_k (region, class) pairs at or above min_confidence, ordered by
    confidence with index order breaking ties.
    """
    logits = output.logits.data
    b, r, k = logits.shape
    if k != len(class_ids):
        raise ValueError(f"logit columns {k} != classes {len(class_ids)}")
    conf = 1.0 / (1.0 + np.exp(-logits))
    boxes = model.decode_boxes(output.box_deltas).data
    grid, patch = model.config.grid, model.config.patch
    mask_probs = None
    if with_masks and output.mask_logits is not None:
        flat = output.mask_logits.data.reshape(b, r, grid, grid)
        up = np.repeat(np.repeat(flat, patch, axis=2), patch, axis=3)
        mask_probs = 1.0 / (1.0 + np.exp(-up))
    out = []
    for i in range(b):
        flat_conf = conf[i].reshape(-1)
        order = np.argsort(-flat_conf, kind="stable")[:top_k]
        for idx in order:
            if flat_conf[idx] < min_confidence:
                break
            region, col = divmod(int(idx), k)
            mask = None
            if mask_probs is not None:
                mask = mask_probs[i, region] >= 0.5
            out.append(Detection(scene=scene_offset + i,
                                 class_id=int(class_ids[col]),
                                 confidence=float(flat_conf[idx]),
                                 box=boxes[i, region], mask=mask))
    return out


def scene_ground_truth(scenes, class_ids=None):
    """Flatten scenes into GroundTruthObject records, optionally filtered."""
    keep = None if class_ids is None else set(int(c) for c in class_ids)
    out = []
    for i, scene in enumerate(scenes):
        for box, cid, mask in zip(scene.boxes, scene.labels, scene.masks):
            if keep is not None and int(cid) not in keep:
                continue
            out.append(GroundTruthObject(scene=i, class_id=int(cid),
                                         box=np.asarray(box, dtype=np.float64),
                                         mask=np.asarray(mask, dtype=bool)))
    return out


def evaluate_detection(model, scenes, prompt, class_ids, batch_size: int = 16,
                       top_k: int = 20, min_confidence: float = 0.05,
                       with_masks: bool = True) -> dict:
    """Run the grounding model over scenes and score box (and mask) AP."""
    class_ids = [int(c) for c in class_ids]
    detections = []
    for start in range(0, len(scenes), batch_size):
        chunk = scenes[start:start + batch_size]
        patches = model.patchify(np.stack([s.image for s in chunk]))
        output = model.ground(patches, prompt)
        detections.extend(extract_detections(
            model, output, class_ids, scene_offset=start, top_k=top_k,
            min_confidence=min_confidence, with_masks=with_masks))
    gt = scene_ground_truth(scenes, class_ids)
    boxes = compute_ap(detections, gt)
    result = {
        "ap": boxes["ap"],
        "ap50": boxes["ap50"],
        "per_class": boxes["per_class"],
        "num_scenes": len(scenes),
        "num_detections": len(detections),
    }
    if with_masks:
        result["ap_mask"] = mask_ap(detections, gt)["ap"]
    return result
