from .vocab import Vocabulary, build_default_vocabulary
from .scenes import Scene, SceneConfig, generate_scene
from .splits import DatasetConfig, DatasetSplits, make_splits
from .io import save_dataset, load_dataset

__all__ = [
    "Vocabulary", "build_default_vocabulary",
    "Scene", "SceneConfig", "generate_scene",
    "DatasetConfig", "DatasetSplits", "make_splits",
    "save_dataset", "load_dataset",
]
