"""Ablation harnesses: token count, loss combinations, fusion/pretraining.

Each harness runs concept search under one varied setting, scores box and
mask AP on held-out scenes, and collects the results into an AblationTable
whose rows aggregate over seeds while keeping every per-seed value for
directional seed-majority comparisons.  Tables export to CSV and JSON.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from itertools import combinations

from ..rng import Rng

AXES = ("tokens", "loss_combo", "fusion", "pretrain_scale")
LOSS_COMBOS = tuple(tuple(c)
                    for r in range(1, 4)
                    for c in combinations(("cls", "bbox", "mask"), r))
_SCORE_KEYS = ("ap_box", "ap50", "ap_mask")


@dataclass
class AblationTable:
    axis: str
    seeds: tuple
    rows: list = field(default_factory=list)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        self.seeds = tuple(int(s) for s in self.seeds)

    def add_row(self, setting: str, seed_metrics: dict):
        """seed_metrics: {seed: {metric: value}}; the row stores per-seed
        values plus their mean per metric."""
        if any(r["setting"] == setting for r in self.rows):
            raise ValueError(f"duplicate setting {setting!r}")
        if set(seed_metrics) != set(self.seeds):
            raise ValueError(f"row {setting!r} covers seeds "
                             f"{sorted(seed_metrics)}, table has {self.seeds}")
        keys = sorted(next(iter(seed_metrics.values())))
        row = {"setting": setting}
        for key in keys:
            row[key] = sum(seed_metrics[s][key] for s in self.seeds) \
                / len(self.seeds)
        row["per_seed"] = {int(s): dict(seed_metrics[s]) for s in self.seeds}
        self.rows.append(row)

    def settings(self) -> list:
        return [r["setting"] for r in self.rows]

    def row(self, setting: str) -> dict:
        for r in self.rows:
            if r["setting"] == setting:
                return r
        raise KeyError(f"no row for setting {setting!r}")

    def wins(self, setting_a: str, setting_b: str,
             metric: str = "ap_box") -> int:
        """Number of seeds on which setting_a >= setting_b."""
        a, b = self.row(setting_a)["per_seed"], self.row(setting_b)["per_seed"]
        return sum(1 for s in self.seeds if a[s][metric] >= b[s][metric])

    def majority(self, setting_a: str, setting_b: str,
                 metric: str = "ap_box") -> bool:
        return 2 * self.wins(setting_a, setting_b, metric) > len(self.seeds)

    def _metric_columns(self) -> list:
        cols = set()
        for r in self.rows:
            cols.update(k for k in r if k not in ("setting", "per_seed"))
        return sorted(cols)

    def to_csv(self) -> str:
        out = io.StringIO()
        cols = self._metric_columns()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["setting"] + cols)
        for r in self.rows:
            writer.writerow([r["setting"]] + [f"{r.get(c, float('nan')):.6f}"
                                              for c in cols])
        return out.getvalue()

    def to_json(self) -> str:
        blob = {"axis": self.axis, "seeds": list(self.seeds),
                "rows": self.rows}
        return json.dumps(blob, indent=1, sort_keys=True)


def _searched_metrics(model, splits, class_ids, m, seed, loss_selection,
                      optcfg) -> dict:
    """One stage-1 search at the given seed, scored on the test split."""
    from ..tuning import OptConfig, init_concept_embeddings, \
        search_concept_embeddings
    from .ap import evaluate_detection
    cfg = replace(optcfg or OptConfig(), seed=seed)
    c0 = init_concept_embeddings(class_ids, m, model.config.embed_dim,
                                 Rng(seed).spawn("ablate/init"))
    run = search_concept_embeddings(model, c0, splits,
                                    loss_selection=loss_selection,
                                    optcfg=cfg)
    result = evaluate_detection(model, splits.split("test"),
                                run.embeddings.prompt(), class_ids)
    return {"ap_box": result["ap"], "ap50": result["ap50"],
            "ap_mask": result["ap_mask"]}


def _domain_average(model, domains: dict, m: int, seed: int, losses,
                    optcfg) -> dict:
    """Search per domain, average the headline metrics, keep suffixed
    per-domain columns."""
    by_domain = {name: _searched_metrics(model, splits, class_ids, m, seed,
                                         losses, optcfg)
                 for name, (splits, class_ids) in domains.items()}
    metrics = {}
    for key in _SCORE_KEYS:
        metrics[key] = sum(d[key] for d in by_domain.values()) / len(by_domain)
        for name, d in by_domain.items():
            metrics[f"{key}_{name}"] = d[key]
    return metrics


def ablate_tokens(model, domains: dict, token_counts=(1, 2, 3, 4, 5),
                  seeds=(0, 1, 2), optcfg=None) -> AblationTable:
    """Vary tokens per class; domains: {name: (splits, class_ids)}."""
    if not domains:
        raise ValueError("at least one domain required")
    table = AblationTable(axis="tokens", seeds=seeds)
    for m in token_counts:
        if m < 1:
            raise ValueError("token counts must be >= 1")
        per_seed = {seed: _domain_average(model, domains, m, seed,
                                          ("cls", "bbox", "mask"), optcfg)
                    for seed in table.seeds}
        table.add_row(f"M={m}", per_seed)
    return table


def ablate_losses(model, splits, class_ids, seeds=(0, 1, 2, 3, 4),
                  optcfg=None, combos=LOSS_COMBOS) -> AblationTable:
    """All non-empty loss subsets, searched and scored on one domain."""
    table = AblationTable(axis="loss_combo", seeds=seeds)
    for combo in combos:
        per_seed = {seed: _searched_metrics(model, splits, class_ids, 3,
                                            seed, combo, optcfg)
                    for seed in table.seeds}
        table.add_row("+".join(combo), per_seed)
    return table


def ablate_fusion_and_pretrain(checkpoint_factory, domains: dict,
                               seeds=(0, 1, 2), optcfg=None,
                               fusion_options=(True, False),
                               pretrain_scales=("small", "full"),
                               axis: str = "fusion") -> AblationTable:
    """Grid over fusion on/off and pretraining scale.

    checkpoint_factory(fusion, scale, seed) must return a frozen model
    pretrained under that variant; concept search transfers it to every
    domain in domains = {name: (splits, class_ids)}.
    """
    if not domains:
        raise ValueError("at least one domain required")
    table = AblationTable(axis=axis, seeds=seeds)
    for fusion in fusion_options:
        for scale in pretrain_scales:
            per_seed = {}
            for seed in table.seeds:
                model = checkpoint_factory(fusion, scale, seed)
                per_seed[seed] = _domain_average(
                    model, domains, 3, seed, ("cls", "bbox", "mask"), optcfg)
            state = "on" if fusion else "off"
            table.add_row(f"fusion={state},pretrain={scale}", per_seed)
    return table
