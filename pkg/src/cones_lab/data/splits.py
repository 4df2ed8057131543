"""Dataset assembly: deterministic train/val/test splits.

Every scene is generated from an rng spawned off (dataset seed, domain,
split name, index), so splits are disjoint streams by construction and any
(seed, config) pair regenerates bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

from ..rng import Rng
from .scenes import Scene, SceneConfig, generate_scene
from .vocab import Vocabulary, build_default_vocabulary

DEFAULT_SIZES = {"in_domain": (800, 100, 100), "out_domain": (200, 50, 50)}


@dataclass
class DatasetConfig:
    seed: int = 0
    domain: str = "in_domain"
    sizes: tuple = None              # (train, val, test); defaulted per domain
    vocabulary: Vocabulary = field(default_factory=build_default_vocabulary)
    min_objects: int = 1
    max_objects: int = 4
    noise_sigma: float = 0.02
    height: int = 32
    width: int = 32

    def __post_init__(self):
        if self.domain not in DEFAULT_SIZES:
            raise ValueError(f"domain must be in_domain or out_domain, got {self.domain!r}")
        if self.sizes is None:
            self.sizes = DEFAULT_SIZES[self.domain]
        self.sizes = tuple(int(s) for s in self.sizes)
        if any(s < 0 for s in self.sizes) or sum(self.sizes) == 0:
            raise ValueError(f"split sizes must be non-negative and non-empty: {self.sizes}")

    @classmethod
    def from_train_val_ratio(cls, total: int, ratio=(8, 2), **kwargs) -> "DatasetConfig":
        """Sizes from a train:val ratio, e.g. 100 scenes at 8:2 -> 80/20/0."""
        train = total * ratio[0] // (ratio[0] + ratio[1])
        return cls(sizes=(train, total - train, 0), **kwargs)

    def scene_config(self) -> SceneConfig:
        palette = (self.vocabulary.in_domain_ids() if self.domain == "in_domain"
                   else self.vocabulary.out_domain_ids())
        return SceneConfig(vocabulary=self.vocabulary, class_ids=palette,
                           height=self.height, width=self.width,
                           min_objects=self.min_objects, max_objects=self.max_objects,
                           noise_sigma=self.noise_sigma)

    def snapshot(self) -> dict:
        blob = asdict(self)
        blob["vocabulary"] = self.vocabulary.to_json()
        blob["sizes"] = list(self.sizes)
        return blob


@dataclass
class DatasetSplits:
    train: list
    val: list
    test: list
    seed: int
    config: dict                     # snapshot of the generating DatasetConfig

    def split(self, name: str) -> list:
        return {"train": self.train, "val": self.val, "test": self.test}[name]


def make_splits(config: DatasetConfig) -> DatasetSplits:
    scfg = config.scene_config()
    root = Rng(config.seed)
    out = {}
    for name, size in zip(("train", "val", "test"), config.sizes):
        scenes = []
        for i in range(size):
            rng = root.spawn(f"{config.domain}/{name}/{i}")
            scenes.append(generate_scene(scfg, rng))
        out[name] = scenes
    return DatasetSplits(train=out["train"], val=out["val"], test=out["test"],
                         seed=config.seed, config=config.snapshot())
