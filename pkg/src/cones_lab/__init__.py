"""Desk-scale laboratory for concept-embedding search on a synthetic
grounding benchmark: a small dual-encoder vision-language model, five
adaptation methods, task losses, and deterministic experiment pipelines,
all on a from-scratch float64 autodiff core.
"""

from .autodiff import Tensor, no_grad, tensor
from .rng import Rng

__version__ = "0.1.0"

__all__ = ["Tensor", "no_grad", "tensor", "Rng", "__version__"]
