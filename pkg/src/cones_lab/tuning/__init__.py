"""Adaptation strategies over the frozen grounding model.

All methods share one training engine and report results as TuningRun
records with exact unfrozen-parameter accounting.
"""

from .artifacts import load_embedding_artifact, save_embedding_artifact
from .common import LOSS_ADDITIVITY_TOL, OptConfig, TuningRun, \
    array_checksum, check_additivity, partition_checksums, \
    require_all_frozen, run_detection_tuning, validation_ap
from .concepts import ConceptEmbeddings, INIT_SCHEMES, \
    finetune_with_embeddings, init_concept_embeddings, \
    search_concept_embeddings
from .inversion import textual_inversion_detection, \
    textual_inversion_generation
from .probe import full_finetune, linear_probe
from .prompt import prompt_tuning

__all__ = [
    "LOSS_ADDITIVITY_TOL", "OptConfig", "TuningRun", "array_checksum",
    "check_additivity", "partition_checksums", "require_all_frozen",
    "run_detection_tuning",
    "validation_ap", "ConceptEmbeddings", "INIT_SCHEMES",
    "init_concept_embeddings", "search_concept_embeddings",
    "finetune_with_embeddings", "textual_inversion_detection",
    "textual_inversion_generation", "prompt_tuning", "linear_probe",
    "full_finetune", "save_embedding_artifact", "load_embedding_artifact",
]
