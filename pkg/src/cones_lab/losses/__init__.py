from .detection import (LOSS_COMPONENTS, box_loss, detection_loss, focal_loss,
                        loss_subsets, mask_loss)
from .targets import (DetectionTargets, SceneTargets, batch_targets,
                      build_targets, scene_targets)

__all__ = [
    "LOSS_COMPONENTS", "box_loss", "detection_loss", "focal_loss",
    "loss_subsets", "mask_loss", "DetectionTargets", "SceneTargets",
    "batch_targets", "build_targets", "scene_targets",
]
