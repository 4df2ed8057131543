"""Embedding-space analysis: how far concept and text embeddings sit from
the visual cluster of each class.

All embeddings are captured in the shared alignment space at the projection
layers applied to the streams entering the first fusion exchange: region
tokens through the visual projection, prompt tokens (pooled per class)
through the text-side projection.  Distances are Euclidean means over the
visual samples of a class, reported both in the raw space and in a shared
deterministic 2D principal-component projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor

RAW_SPACE = "raw_embedding"
PROJECTED_SPACE = "projected_2d"


@dataclass
class GapReport:
    rows: list = field(default_factory=list)
    visual_counts: dict = field(default_factory=dict)

    def add(self, method: str, class_id: int, space: str, distance: float):
        if distance < 0:
            raise ValueError("distance must be non-negative")
        self.rows.append({"method": method, "class_id": int(class_id),
                          "space": space, "distance": float(distance)})

    def distances(self, method: str, space: str = RAW_SPACE) -> dict:
        return {r["class_id"]: r["distance"] for r in self.rows
                if r["method"] == method and r["space"] == space}

    def method_mean(self, method: str, space: str = RAW_SPACE) -> float:
        vals = list(self.distances(method, space).values())
        if not vals:
            raise KeyError(f"no rows for method {method!r} in {space!r}")
        return float(np.mean(vals))

    def to_json(self) -> dict:
        return {"rows": self.rows,
                "visual_counts": {str(k): v for k, v in self.visual_counts.items()}}


def project_2d(points: np.ndarray) -> np.ndarray:
    """Deterministic 2-component PCA: centered, SVD-based, each component's
    sign fixed so its largest-magnitude loading is positive."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError(f"need at least 2 points, got shape {pts.shape}")
    centered = pts - pts.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2] if vt.shape[0] >= 2 else np.vstack([vt, np.zeros_like(vt)])
    fixed = []
    for comp in comps:
        lead = np.argmax(np.abs(comp))
        fixed.append(-comp if comp[lead] < 0 else comp)
    return centered @ np.stack(fixed).T


def mean_distance(target: np.ndarray, samples: np.ndarray) -> float:
    """Euclidean distance from target to each sample row, averaged."""
    diffs = np.asarray(samples, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(np.sqrt((diffs * diffs).sum(axis=1))))


def visual_class_embeddings(model, scenes, class_ids) -> dict:
    """Projected pre-fusion region embedding at each object's center cell."""
    wanted = {int(c) for c in class_ids}
    out = {int(c): [] for c in class_ids}
    for start in range(0, len(scenes), 16):
        chunk = scenes[start:start + 16]
        patches = model.patchify(np.stack([s.image for s in chunk]))
        stream = model.image_prefix(patches)
        projected = model.proj_v(stream).data
        for b, scene in enumerate(chunk):
            for box, cid in zip(scene.boxes, scene.labels):
                if int(cid) in wanted:
                    region = model.center_region(box)
                    out[int(cid)].append(projected[b, region])
    return {cid: np.stack(vecs) for cid, vecs in out.items() if vecs}


def text_class_embeddings(model, prompt) -> dict:
    """Pooled per-class text-tower embeddings entering fusion, projected."""
    stream = model._text_prefix(prompt)
    pool = Tensor(model._pool_matrix(prompt.spans, stream.data.shape[1]))
    pooled = model.proj_p(pool @ stream[0])
    return {int(cid): pooled.data[i]
            for i, (cid, _, _) in enumerate(prompt.spans)}


def concept_class_embeddings(model, concept_prompt) -> dict:
    """Mean concept vector per class through the text-side projection."""
    pooled = model.proj_p(concept_prompt.embeddings.mean(axis=1))
    return {int(cid): pooled.data[i]
            for i, cid in enumerate(concept_prompt.class_ids)}


def modality_gap_report(model, method_embeddings: dict, visual: dict,
                        include_projection: bool = True) -> GapReport:
    """Mean embedding distance to the visual samples, per method and class.

    method_embeddings: {method name: {class_id: (d,) vector}};
    visual: {class_id: (n, d) array}, n >= 2 required per class.
    """
    if not visual:
        raise ValueError("no visual samples supplied")
    for cid, samples in visual.items():
        if len(samples) < 2:
            raise ValueError(f"class {cid} needs >= 2 visual samples, got {len(samples)}")
    report = GapReport()
    report.visual_counts = {int(c): int(len(v)) for c, v in visual.items()}
    for method, per_class in sorted(method_embeddings.items()):
        for cid in sorted(per_class):
            if cid not in visual:
                raise ValueError(f"class {cid} has no visual samples")
            report.add(method, cid, RAW_SPACE,
                       mean_distance(per_class[cid], visual[cid]))
    if include_projection:
        stack, spans = [], {}
        for cid in sorted(visual):
            spans[("visual", cid)] = (len(stack), len(stack) + len(visual[cid]))
            stack.extend(visual[cid])
        for method, per_class in sorted(method_embeddings.items()):
            for cid in sorted(per_class):
                spans[(method, cid)] = (len(stack), len(stack) + 1)
                stack.append(per_class[cid])
        coords = project_2d(np.stack(stack))
        for method, per_class in sorted(method_embeddings.items()):
            for cid in sorted(per_class):
                lo, hi = spans[(method, cid)]
                vlo, vhi = spans[("visual", cid)]
                report.add(method, cid, PROJECTED_SPACE,
                           mean_distance(coords[lo], coords[vlo:vhi]))
    return report
