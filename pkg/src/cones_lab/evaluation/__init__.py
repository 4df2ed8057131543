from .ablate import (AXES, LOSS_COMBOS, AblationTable,
                     ablate_fusion_and_pretrain, ablate_losses,
                     ablate_tokens)
from .ap import (IOU_THRESHOLDS, Detection, GroundTruthObject, box_iou,
                 compute_ap, evaluate_detection, extract_detections, mask_ap,
                 mask_iou, scene_ground_truth)
from .gap import (PROJECTED_SPACE, RAW_SPACE, GapReport,
                  concept_class_embeddings, mean_distance,
                  modality_gap_report, project_2d, text_class_embeddings,
                  visual_class_embeddings)

__all__ = [
    "AXES", "LOSS_COMBOS", "AblationTable", "ablate_fusion_and_pretrain",
    "ablate_losses", "ablate_tokens",
    "IOU_THRESHOLDS", "Detection", "GroundTruthObject", "box_iou",
    "compute_ap", "evaluate_detection", "extract_detections", "mask_ap",
    "mask_iou", "scene_ground_truth", "PROJECTED_SPACE", "RAW_SPACE",
    "GapReport", "concept_class_embeddings", "mean_distance",
    "modality_gap_report", "project_2d", "text_class_embeddings",
    "visual_class_embeddings",
]
