from __future__ import annotations

from dataclasses import dataclass, asdict


@dataclass
class VlmConfig:
    embed_dim: int = 64
    patch: int = 4
    image_size: int = 32
    depth: int = 4
    heads: int = 4
    mlp_ratio: int = 2
    fusion: bool = True
    fusion_layers: int = 2
    tau_init: float = 0.07
    vocab_size: int = 16
    max_text_len: int = 64
    head_hidden: int = 64

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by "
                             f"{self.heads} heads")
        if self.fusion_layers > self.depth:
            raise ValueError(f"fusion_layers {self.fusion_layers} exceeds depth {self.depth}")
        if self.tau_init <= 0:
            raise ValueError("temperature init must be positive")
        if self.image_size % self.patch:
            raise ValueError("image_size must be a multiple of patch")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch

    @property
    def num_regions(self) -> int:
        return self.grid * self.grid

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, blob: dict) -> "VlmConfig":
        return cls(**blob)
