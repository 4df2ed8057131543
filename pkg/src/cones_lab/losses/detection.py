"""Detection training objectives: focal classification, box regression,
mask prediction, and their unweighted combination.

All three are written in smooth primitives (sigmoid, softplus) rather than
literal -log(p) so they stay finite at extreme logits and differentiate
cleanly.
"""

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from .targets import DetectionTargets

LOSS_COMPONENTS = ("cls", "bbox", "mask")

_EPS = 1e-9


def loss_subsets():
    """All non-empty subsets of the loss components, smallest first."""
    out = []
    for bits in range(1, 2 ** len(LOSS_COMPONENTS)):
        out.append(tuple(c for i, c in enumerate(LOSS_COMPONENTS) if bits >> i & 1))
    out.sort(key=len)
    return out


def focal_loss(logits: Tensor, targets: np.ndarray, gamma: float = 2.0,
               alpha: float = 0.25) -> Tensor:
    """Sigmoid focal loss over every (region, class) pair.

    Uses -log(pt) = softplus(x) - x*y and 1 - pt = sigmoid((1-2y)*x), both
    exact for y in {0, 1}.  Normalized by the number of positive pairs
    (at least 1).
    """
    y = np.asarray(targets, dtype=np.float64)
    weight = alpha * y + (1.0 - alpha) * (1.0 - y)
    ce = logits.softplus() - logits * y
    one_minus_pt = (logits * (1.0 - 2.0 * y)).sigmoid()
    per_pair = one_minus_pt ** gamma * ce * weight
    norm = max(1.0, float(y.sum()))
    return per_pair.sum() / norm


def box_loss(model, box_deltas: Tensor, targets: DetectionTargets) -> Tensor:
    """Coordinate L1 (canvas-normalized) plus generalized-IoU penalty,
    averaged over assigned regions."""
    if targets.count == 0:
        return Tensor(np.array(0.0))
    gt = targets.boxes
    if np.any(gt[:, 2] <= gt[:, 0]) or np.any(gt[:, 3] <= gt[:, 1]):
        raise ValueError("degenerate ground-truth box with zero area")
    gathered = box_deltas[targets.b_idx, targets.r_idx]
    pred = model.decode_boxes(gathered, regions=targets.r_idx)
    size = float(model.config.image_size)

    l1 = ((pred - gt).abs() / size).sum(axis=1).mean()

    px0, py0, px1, py1 = pred[:, 0], pred[:, 1], pred[:, 2], pred[:, 3]
    gx0, gy0, gx1, gy1 = gt[:, 0], gt[:, 1], gt[:, 2], gt[:, 3]
    iw = (ad.minimum(px1, gx1) - ad.maximum(px0, gx0)).relu()
    ih = (ad.minimum(py1, gy1) - ad.maximum(py0, gy0)).relu()
    inter = iw * ih
    area_p = (px1 - px0) * (py1 - py0)
    area_g = (gx1 - gx0) * (gy1 - gy0)
    union = area_p + area_g - inter
    iou = inter / (union + _EPS)
    hull = (ad.maximum(px1, gx1) - ad.minimum(px0, gx0)) * \
           (ad.maximum(py1, gy1) - ad.minimum(py0, gy0))
    giou = iou - (hull - union) / (hull + _EPS)
    return l1 + (1.0 - giou).mean()


def mask_loss(model, mask_logits: Tensor, targets: DetectionTargets) -> Tensor:
    """Per-object binary cross-entropy plus Dice at full image resolution.

    Region mask logits live on the patch grid and are nearest-upsampled to
    the canvas before comparison.
    """
    if targets.count == 0:
        return Tensor(np.array(0.0))
    g, patch = model.config.grid, model.config.patch
    gathered = mask_logits[targets.b_idx, targets.r_idx]
    maps = ad.upsample_nearest(gathered.reshape(targets.count, g, g), patch)
    y = targets.masks
    n_pix = float(y.shape[1] * y.shape[2])

    flat_x = maps.reshape(targets.count, -1)
    flat_y = y.reshape(targets.count, -1)
    bce = (flat_x.softplus() - flat_x * flat_y).sum(axis=1) / n_pix

    p = flat_x.sigmoid()
    inter = (p * flat_y).sum(axis=1)
    dice = 1.0 - (2.0 * inter + 1.0) / (p.sum(axis=1) + flat_y.sum(axis=1) + 1.0)
    return (bce + dice).mean()


def detection_loss(model, output, targets: DetectionTargets,
                   components=LOSS_COMPONENTS):
    """Unweighted sum of the selected components.

    Returns (total, parts) where parts maps each enabled component to its
    scalar term; total is exactly their sum.
    """
    unknown = [c for c in components if c not in LOSS_COMPONENTS]
    if unknown:
        raise ValueError(f"unknown loss component {unknown[0]!r}")
    parts = {}
    if "cls" in components:
        parts["cls"] = focal_loss(output.logits, targets.cls)
    if "bbox" in components:
        parts["bbox"] = box_loss(model, output.box_deltas, targets)
    if "mask" in components:
        parts["mask"] = mask_loss(model, output.mask_logits, targets)
    total = None
    for c in LOSS_COMPONENTS:
        if c in parts:
            total = parts[c] if total is None else total + parts[c]
    return total, parts
