"""Miniature dual-encoder vision-language model with late cross-attention
fusion, region-class alignment scoring, and box/mask heads.

Parameter partitions {image, text, fusion, heads} are exhaustive and
disjoint; the temperature is a calibration buffer outside the partitions,
trainable only during pretraining.  The text tower counts its evaluations so
training loops can prove they never ran it.

Prompts come in two forms.  A TextPrompt is a token sequence with per-class
spans and runs through the text tower.  A ConceptPrompt is a block of
learnable per-class vectors injected directly at the fusion interface; the
text tower is bypassed entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..rng import Rng
from .config import VlmConfig
from .layers import Block, FusionLayer, Linear, LayerNorm, Mlp, Module

PARTITIONS = ("image", "text", "fusion", "heads")


@dataclass
class TextPrompt:
    """One prompt shared by every scene in the batch.

    spans maps each class to the [start, stop) slice of prompt positions to
    pool for its class embedding.  embedding_overrides, when set, replaces
    the table lookup for the given positions with supplied tensors (prompt
    tuning and pseudo-word baselines build on this).
    """
    token_ids: np.ndarray
    spans: list                      # (class_id, start, stop)
    embedding_overrides: dict = None  # position -> Tensor of shape (d,)
    use_positions: bool = True


@dataclass
class ConceptPrompt:
    """Per-class concept matrices fed straight to the fusion interface."""
    embeddings: Tensor               # (K, M, d)
    class_ids: list

    @property
    def tokens_per_class(self) -> int:
        return self.embeddings.shape[1]


class GroundOutput:
    def __init__(self, **kw):
        self._probs = None
        self.__dict__.update(kw)

    @property
    def probs(self):
        """Softmax over classes of the alignment logits, computed on demand."""
        if self._probs is None:
            self._probs = self.logits.softmax()
        return self._probs


class VlmModel:
    def __init__(self, config: VlmConfig, rng: Rng):
        c = self.config = config
        d = c.embed_dim
        patch_dim = c.patch * c.patch * 3
        r_img = rng.spawn("image")
        r_txt = rng.spawn("text")
        r_fus = rng.spawn("fusion")
        r_head = rng.spawn("heads")

        self.patch_embed = Linear(patch_dim, d, r_img.spawn("patch"))
        self.image_pos = Tensor(r_img.normal(0, 0.02, (c.num_regions, d)), requires_grad=True)
        self.image_blocks = [Block(d, c.heads, c.mlp_ratio, r_img.spawn(f"block{i}"))
                             for i in range(c.depth)]
        self.image_ln = LayerNorm(d)

        self.token_embed = Tensor(r_txt.normal(0, 0.02, (c.vocab_size, d)), requires_grad=True)
        self.text_pos = Tensor(r_txt.normal(0, 0.02, (c.max_text_len, d)), requires_grad=True)
        self.text_blocks = [Block(d, c.heads, c.mlp_ratio, r_txt.spawn(f"block{i}"))
                            for i in range(c.depth)]
        self.text_ln = LayerNorm(d)

        self.fusion = [FusionLayer(d, c.heads, r_fus.spawn(f"layer{i}"))
                       for i in range(c.fusion_layers if c.fusion else 0)]

        self.proj_v = Linear(d, d, r_head.spawn("proj_v"), bias=False)
        self.proj_p = Linear(d, d, r_head.spawn("proj_p"), bias=False)
        self.box_head = Mlp(d, c.head_hidden, 4, r_head.spawn("box"))
        self.mask_head = Mlp(d, c.head_hidden, c.num_regions, r_head.spawn("mask"))

        # calibration buffer, not a partition member; pretraining may unfreeze it
        self.tau = Tensor(np.array(c.tau_init), requires_grad=False)
        self.text_eval_count = 0

    # ---- parameter registry ----

    def parameters(self) -> dict:
        named = {}
        named.update({f"image.patch_embed.{k}": t for k, t in self.patch_embed.params().items()})
        named["image.pos"] = self.image_pos
        for i, blk in enumerate(self.image_blocks):
            named.update({f"image.block{i}.{k}": t for k, t in blk.params().items()})
        named.update({f"image.ln.{k}": t for k, t in self.image_ln.params().items()})

        named["text.token_embed"] = self.token_embed
        named["text.pos"] = self.text_pos
        for i, blk in enumerate(self.text_blocks):
            named.update({f"text.block{i}.{k}": t for k, t in blk.params().items()})
        named.update({f"text.ln.{k}": t for k, t in self.text_ln.params().items()})

        for i, layer in enumerate(self.fusion):
            named.update({f"fusion.layer{i}.{k}": t for k, t in layer.params().items()})

        named.update({f"heads.proj_v.{k}": t for k, t in self.proj_v.params().items()})
        named.update({f"heads.proj_p.{k}": t for k, t in self.proj_p.params().items()})
        named.update({f"heads.box.{k}": t for k, t in self.box_head.params().items()})
        named.update({f"heads.mask.{k}": t for k, t in self.mask_head.params().items()})
        return named

    @staticmethod
    def partition_of(name: str) -> str:
        part = name.split(".", 1)[0]
        if part not in PARTITIONS:
            raise KeyError(f"parameter {name} belongs to no partition")
        return part

    def partition_params(self, *parts) -> list:
        return [t for n, t in self.parameters().items() if self.partition_of(n) in parts]

    def count_parameters(self, include_text_encoder: bool = True) -> dict:
        counts = {p: 0 for p in PARTITIONS}
        for name, t in self.parameters().items():
            counts[self.partition_of(name)] += t.size
        counts["total"] = sum(counts[p] for p in PARTITIONS)
        counts["total_without_text"] = counts["total"] - counts["text"]
        if not include_text_encoder:
            del counts["text"]
            counts["total"] = counts["total_without_text"]
        return counts

    def freeze_all(self):
        for t in self.parameters().values():
            t.requires_grad = False
        self.tau.requires_grad = False

    def set_trainable(self, *parts):
        """Freeze everything, then unfreeze the given partitions."""
        self.freeze_all()
        for name, t in self.parameters().items():
            if self.partition_of(name) in parts:
                t.requires_grad = True

    def frozen_flags(self) -> dict:
        return {n: not t.requires_grad for n, t in self.parameters().items()}

    # ---- forward pieces ----

    def patchify(self, images: np.ndarray) -> np.ndarray:
        """(B, H, W, 3) -> (B, R, patch*patch*3), row-major over the grid."""
        p, g = self.config.patch, self.config.grid
        b = images.shape[0]
        x = images.reshape(b, g, p, g, p, 3).transpose(0, 1, 3, 2, 4, 5)
        return np.ascontiguousarray(x).reshape(b, g * g, p * p * 3)

    def _image_tokens(self, patches: np.ndarray) -> Tensor:
        return self.patch_embed(Tensor(patches)) + self.image_pos

    def _text_tokens(self, prompt: TextPrompt) -> Tensor:
        self.text_eval_count += 1
        ids = np.asarray(prompt.token_ids, dtype=np.int64)
        if ids.ndim != 1:
            raise ValueError(f"prompt token ids must be 1-D, got shape {ids.shape}")
        if (ids < 0).any() or (ids >= self.config.vocab_size).any():
            raise ValueError("token id outside vocabulary")
        if len(ids) > self.config.max_text_len:
            raise ValueError(f"prompt length {len(ids)} exceeds max {self.config.max_text_len}")
        rows = self.token_embed[ids]
        if prompt.embedding_overrides:
            parts = [prompt.embedding_overrides.get(i, rows[i]) for i in range(len(ids))]
            rows = ad.stack(parts, axis=0)
        if prompt.use_positions:
            rows = rows + self.text_pos[:len(ids)]
        return rows.reshape(1, len(ids), self.config.embed_dim)

    def _pool_matrix(self, spans, length: int) -> np.ndarray:
        pool = np.zeros((len(spans), length))
        for row, (_, start, stop) in enumerate(spans):
            pool[row, start:stop] = 1.0 / (stop - start)
        return pool

    @property
    def fusion_start(self) -> int:
        """Tower depth at which the first cross-modal exchange happens."""
        return self.config.depth - len(self.fusion)

    def image_prefix(self, patches: np.ndarray) -> Tensor:
        """Image tower up to the first fusion exchange.

        With the image partition frozen this is constant per scene, so
        training loops that only touch the prompt side may cache it.
        """
        v = self._image_tokens(patches)
        for layer in range(min(self.fusion_start + 1, self.config.depth)):
            v = self.image_blocks[layer](v)
        return v

    def _text_prefix(self, prompt: TextPrompt) -> Tensor:
        p = self._text_tokens(prompt)
        for layer in range(min(self.fusion_start + 1, self.config.depth)):
            p = self.text_blocks[layer](p)
        return p

    def ground(self, patches: np.ndarray, prompt,
               image_prefix: Tensor = None) -> GroundOutput:
        """Joint forward pass: towers, interleaved fusion, alignment, heads.

        image_prefix, when given, must be image_prefix(patches) for the same
        scenes; patches is then ignored.
        """
        c = self.config
        v = image_prefix if image_prefix is not None else self.image_prefix(patches)
        concept_mode = isinstance(prompt, ConceptPrompt)
        if concept_mode:
            k, m, d = prompt.embeddings.shape
            p = prompt.embeddings.reshape(1, k * m, d)
            spans = [(cid, i * m, (i + 1) * m) for i, cid in enumerate(prompt.class_ids)]
        else:
            p = self._text_prefix(prompt)
            spans = prompt.spans

        pre_fusion = (v, p)
        for layer in range(self.fusion_start, c.depth):
            if layer > self.fusion_start:
                v = self.image_blocks[layer](v)
                if not concept_mode:
                    p = self.text_blocks[layer](p)
            v, p = self.fusion[layer - self.fusion_start](v, p)

        v = self.image_ln(v)
        if not concept_mode:
            p = self.text_ln(p)

        pool = Tensor(self._pool_matrix(spans, p.shape[1]).reshape(1, len(spans), p.shape[1]))
        pooled = pool @ p                                    # (B or 1, K, d)

        v_emb = self.proj_v(v)
        p_emb = self.proj_p(pooled)
        logits = self.alignment_logits(v_emb, p_emb)
        return GroundOutput(
            v=v, p=p, pooled=pooled, spans=spans,
            pre_fusion_v=pre_fusion[0], pre_fusion_p=pre_fusion[1],
            logits=logits,
            box_deltas=self.box_head(v), mask_logits=self.mask_head(v),
            class_ids=[s[0] for s in spans],
        )

    def alignment_logits(self, v_emb: Tensor, p_emb: Tensor) -> Tensor:
        """cos(v_r, p_i) / tau as (B, R, K)."""
        vn = (v_emb * v_emb).sum(axis=-1, keepdims=True).sqrt()
        pn = (p_emb * p_emb).sum(axis=-1, keepdims=True).sqrt()
        if float(vn.data.min()) == 0.0 or float(pn.data.min()) == 0.0:
            raise ValueError("zero-norm embedding in alignment scoring")
        v_hat = v_emb / vn
        p_hat = p_emb / pn
        return (v_hat @ p_hat.transpose(0, 2, 1)) / self.tau

    def encode_image(self, images: np.ndarray) -> Tensor:
        """Image tower alone (no fusion): (B, R, d), layer-normalized."""
        if images.shape[1:] != (self.config.image_size, self.config.image_size, 3):
            raise ValueError(f"expected images of shape (B, {self.config.image_size}, "
                             f"{self.config.image_size}, 3), got {images.shape}")
        v = self._image_tokens(self.patchify(images))
        for blk in self.image_blocks:
            v = blk(v)
        return self.image_ln(v)

    def encode_text(self, prompt: TextPrompt):
        """Text tower alone (no fusion): ((1, T, d), pooled (1, K, d))."""
        p = self._text_tokens(prompt)
        for blk in self.text_blocks:
            p = blk(p)
        p = self.text_ln(p)
        pool = Tensor(self._pool_matrix(prompt.spans, p.shape[1]).reshape(
            1, len(prompt.spans), p.shape[1]))
        return p, pool @ p

    # ---- boxes ----

    def decode_boxes(self, deltas: Tensor, regions=None) -> Tensor:
        """Sigmoid-bounded deltas -> pixel boxes (x0, y0, x1, y1).

        With regions=None, deltas is (B, R, 4) over the full grid; with a
        regions index array, deltas is (A, 4) for those cells only.  Zero
        deltas decode to the region's own patch cell; centers may move up to
        one patch width; extents clamp to the canvas.
        """
        c = self.config
        patch, g, size = float(c.patch), c.grid, float(c.image_size)
        s = deltas.sigmoid()
        if regions is None:
            cell = np.arange(g) * patch + patch / 2
            ax = np.tile(cell, g).reshape(1, -1)
            ay = np.repeat(cell, g).reshape(1, -1)
            sx, sy, sw, sh = s[:, :, 0], s[:, :, 1], s[:, :, 2], s[:, :, 3]
            axis = 2
        else:
            regions = np.asarray(regions)
            ax = (regions % g) * patch + patch / 2
            ay = (regions // g) * patch + patch / 2
            sx, sy, sw, sh = s[:, 0], s[:, 1], s[:, 2], s[:, 3]
            axis = 1
        cx = (sx * 2.0 - 1.0) * patch + ax
        cy = (sy * 2.0 - 1.0) * patch + ay
        w = sw / (1.0 - sw) * patch
        h = sh / (1.0 - sh) * patch
        x0 = ad.clamp(cx - w * 0.5, 0.0, size)
        y0 = ad.clamp(cy - h * 0.5, 0.0, size)
        x1 = ad.clamp(cx + w * 0.5, 0.0, size)
        y1 = ad.clamp(cy + h * 0.5, 0.0, size)
        return ad.stack([x0, y0, x1, y1], axis=axis)

    def encode_box(self, box, region: int) -> np.ndarray:
        """Inverse of decode_boxes for one box assigned to one region."""
        c = self.config
        patch, g = float(c.patch), c.grid
        ax = (region % g) * patch + patch / 2
        ay = (region // g) * patch + patch / 2
        x0, y0, x1, y1 = box
        cx, cy, w, h = (x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0

        def logit(s):
            return float(np.log(s / (1.0 - s)))

        return np.array([logit(((cx - ax) / patch + 1.0) / 2.0),
                         logit(((cy - ay) / patch + 1.0) / 2.0),
                         logit(w / (w + patch)),
                         logit(h / (h + patch))])

    def center_region(self, box) -> int:
        """Region index whose patch cell contains the box center."""
        c = self.config
        cx = min(int(((box[0] + box[2]) / 2) // c.patch), c.grid - 1)
        cy = min(int(((box[1] + box[3]) / 2) // c.patch), c.grid - 1)
        return cy * c.grid + cx
