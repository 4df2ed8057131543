from .checkpoint import load_checkpoint, save_checkpoint
from .config import VlmConfig
from .pretrain import PretrainConfig, PretrainResult, pretrain_vlm
from .prompts import context_prompt, detection_prompt, pseudoword_prompt
from .vlm import PARTITIONS, ConceptPrompt, TextPrompt, VlmModel

__all__ = [
    "load_checkpoint", "save_checkpoint", "VlmConfig", "PretrainConfig",
    "PretrainResult", "pretrain_vlm", "context_prompt", "detection_prompt",
    "pseudoword_prompt", "PARTITIONS", "ConceptPrompt", "TextPrompt",
    "VlmModel",
]
