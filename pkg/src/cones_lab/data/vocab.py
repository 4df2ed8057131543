"""Class vocabulary and the word-level tokenizer.

Twelve in-domain classes (solid shapes x colors) drive pretraining; six
out-of-domain classes (textured primitives in colors never seen during
pretraining) exist only for transfer-time tuning.  Captions are class names
joined by a separator token.
"""

from __future__ import annotations

from dataclasses import dataclass, field

PAD_TOKEN = "[PAD]"
SEP_TOKEN = "[SEP]"

IN_DOMAIN_COLORS = ["red", "green", "blue", "yellow"]
IN_DOMAIN_SHAPES = ["circle", "square", "triangle"]
OUT_DOMAIN_COLORS = ["purple", "orange"]
OUT_DOMAIN_SHAPES = ["striped ellipse", "ring", "checker blob"]

COLOR_RGB = {
    "red": (0.90, 0.15, 0.15),
    "green": (0.15, 0.80, 0.20),
    "blue": (0.15, 0.25, 0.90),
    "yellow": (0.90, 0.85, 0.15),
    "purple": (0.60, 0.20, 0.75),
    "orange": (0.95, 0.55, 0.10),
}


@dataclass(frozen=True)
class ClassSpec:
    name: str
    color: str
    shape: str
    domain: str  # in_domain | out_domain


@dataclass
class Vocabulary:
    classes: list = field(default_factory=list)
    token_to_id: dict = field(default_factory=dict)

    @property
    def id_to_token(self):
        return {i: t for t, i in self.token_to_id.items()}

    @property
    def num_tokens(self) -> int:
        return len(self.token_to_id)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def sep_id(self) -> int:
        return self.token_to_id[SEP_TOKEN]

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD_TOKEN]

    def in_domain_ids(self):
        return [i for i, c in enumerate(self.classes) if c.domain == "in_domain"]

    def out_domain_ids(self):
        return [i for i, c in enumerate(self.classes) if c.domain == "out_domain"]

    def class_name(self, class_id: int) -> str:
        return self.classes[class_id].name

    def class_index(self, name: str) -> int:
        for i, c in enumerate(self.classes):
            if c.name == name:
                return i
        raise KeyError(f"unknown class {name!r}")

    def encode_class(self, class_id: int) -> list:
        """Token id sequence for one class name."""
        if not 0 <= class_id < len(self.classes):
            raise IndexError(f"class id {class_id} outside vocabulary "
                             f"of {len(self.classes)} classes")
        return [self.token_to_id[w] for w in self.classes[class_id].name.split()]

    def caption_for(self, class_ids) -> list:
        """Caption naming exactly the given set of classes, separator-joined,
        in ascending class-id order."""
        ids = sorted(set(int(c) for c in class_ids))
        tokens = []
        for j, cid in enumerate(ids):
            if j:
                tokens.append(self.sep_id)
            tokens.extend(self.encode_class(cid))
        return tokens

    def to_json(self) -> dict:
        return {
            "classes": [{"name": c.name, "color": c.color, "shape": c.shape,
                         "domain": c.domain} for c in self.classes],
            "token_to_id": dict(self.token_to_id),
        }

    @classmethod
    def from_json(cls, blob: dict) -> "Vocabulary":
        classes = [ClassSpec(**c) for c in blob["classes"]]
        return cls(classes=classes, token_to_id={k: int(v) for k, v in blob["token_to_id"].items()})


def build_default_vocabulary() -> Vocabulary:
    classes = [ClassSpec(f"{color} {shape}", color, shape, "in_domain")
               for shape in IN_DOMAIN_SHAPES for color in IN_DOMAIN_COLORS]
    classes += [ClassSpec(f"{color} {shape}", color, shape, "out_domain")
                for shape in OUT_DOMAIN_SHAPES for color in OUT_DOMAIN_COLORS]
    words = [PAD_TOKEN, SEP_TOKEN]
    for c in classes:
        for w in c.name.split():
            if w not in words:
                words.append(w)
    return Vocabulary(classes=classes, token_to_id={w: i for i, w in enumerate(words)})
