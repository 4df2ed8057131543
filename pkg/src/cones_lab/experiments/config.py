"""Experiment configuration: schema, defaults, file loading, hashing.

A configuration is a plain JSON document.  Every key has an explicit
default, unknown keys are rejected, and the resolved document is what gets
hashed, so a config file plus a seed pins every downstream artifact.
"""

import copy
import hashlib
import json
import os

import jsonschema

from ..errors import ConfigError

DEFAULTS = {
    "seed": 0,
    "out_dir": "",                   # "" -> $CONES_LAB_HOME or ./cones_runs
    "data": {
        "seed": 0,
        "in_domain_sizes": [800, 100, 100],
        "out_domain_sizes": [200, 50, 50],
        "min_objects": 1,
        "max_objects": 4,
        "noise_sigma": 0.02,
        "height": 32,
        "width": 32,
    },
    "model": {
        "embed_dim": 64,
        "patch": 4,
        "image_size": 32,
        "depth": 4,
        "heads": 4,
        "mlp_ratio": 2,
        "fusion": True,
        "fusion_layers": 2,
        "tau_init": 0.07,
        "max_text_len": 64,
        "head_hidden": 64,
    },
    "pretrain": {
        "steps": 1500,
        "batch_size": 8,
        "lr": 1e-3,
        "weight_decay": 0.05,
        "clip_norm": 5.0,
        "eval_every": 0,
        "eval_scene_limit": 100,
        "train_tau": True,
    },
    "tune": {
        "method": "cones",
        "domain": "out_domain",
        "tokens_per_class": 3,
        "losses": ["cls", "bbox", "mask"],
        "init_scheme": "gaussian",
        "steps": 600,
        "lr": 1e-3,
        "stage2_lr": 1e-5,
        "weight_decay": 0.0,
        "batch_size": 8,
        "clip_norm": 5.0,
        "eval_every": 100,
        "select_best": True,
        "val_scene_limit": 0,
        "checkpoint": "",            # "" -> derived from this config
        "embeddings": "",            # stage 2: stem of a saved stage-1 artifact
    },
    "eval": {
        "domain": "out_domain",
        "split": "test",
        "checkpoint": "",
        "embeddings": "",            # "" -> zero-shot text prompt
    },
    "ablate": {
        "axis": "tokens",
        "seeds": [0, 1, 2],
        "token_counts": [1, 2, 3, 4, 5],
        "small_pretrain_steps": 300,
    },
    "gap": {
        "max_scenes": 100,
    },
    "generate": {
        "image_hw": 8,
        "hidden": 256,
        "layers": 2,
        "cond_dim": 64,
        "temb_dim": 32,
        "ddpm_steps": 100,
        "colors": [[0.95, 0.1, 0.1], [0.1, 0.1, 0.95]],
        "jitter": 0.10,
        "images_per_concept": 64,
        "train_steps": 3000,
        "lr": 1e-3,
        "batch_size": 512,
        "n_samples": 32,
        "ppm_samples": 4,
    },
}

_INT = {"type": "integer"}
_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}
_NONNEG_INT = {"type": "integer", "minimum": 0}
_POS_NUM = {"type": "number", "exclusiveMinimum": 0}
_NONNEG_NUM = {"type": "number", "minimum": 0}
_BOOL = {"type": "boolean"}
_STR = {"type": "string"}
_SIZES = {"type": "array", "items": _NONNEG_INT, "minItems": 3, "maxItems": 3}
_SEEDS = {"type": "array", "items": _NONNEG_INT, "minItems": 1}
_DOMAIN = {"enum": ["in_domain", "out_domain"]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": _NONNEG_INT,
        "out_dir": _STR,
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seed": _NONNEG_INT,
                "in_domain_sizes": _SIZES,
                "out_domain_sizes": _SIZES,
                "min_objects": _POS_INT,
                "max_objects": _POS_INT,
                "noise_sigma": _NONNEG_NUM,
                "height": _POS_INT,
                "width": _POS_INT,
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "embed_dim": _POS_INT,
                "patch": _POS_INT,
                "image_size": _POS_INT,
                "depth": _POS_INT,
                "heads": _POS_INT,
                "mlp_ratio": _POS_INT,
                "fusion": _BOOL,
                "fusion_layers": _NONNEG_INT,
                "tau_init": _POS_NUM,
                "max_text_len": _POS_INT,
                "head_hidden": _POS_INT,
            },
        },
        "pretrain": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "steps": _NONNEG_INT,
                "batch_size": _POS_INT,
                "lr": _POS_NUM,
                "weight_decay": _NONNEG_NUM,
                "clip_norm": _POS_NUM,
                "eval_every": _NONNEG_INT,
                "eval_scene_limit": _NONNEG_INT,
                "train_tau": _BOOL,
            },
        },
        "tune": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["cones", "prompt", "textinv", "linear",
                                    "full", "cones-stage2"]},
                "domain": _DOMAIN,
                "tokens_per_class": _NONNEG_INT,
                "losses": {"type": "array", "minItems": 1, "uniqueItems": True,
                           "items": {"enum": ["cls", "bbox", "mask"]}},
                "init_scheme": {"enum": ["gaussian", "copy_text"]},
                "steps": _NONNEG_INT,
                "lr": _POS_NUM,
                "stage2_lr": _POS_NUM,
                "weight_decay": _NONNEG_NUM,
                "batch_size": _POS_INT,
                "clip_norm": _POS_NUM,
                "eval_every": _NONNEG_INT,
                "select_best": _BOOL,
                "val_scene_limit": _NONNEG_INT,
                "checkpoint": _STR,
                "embeddings": _STR,
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "domain": _DOMAIN,
                "split": {"enum": ["train", "val", "test"]},
                "checkpoint": _STR,
                "embeddings": _STR,
            },
        },
        "ablate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "axis": {"enum": ["tokens", "losses", "fusion", "pretrain"]},
                "seeds": _SEEDS,
                "token_counts": {"type": "array", "items": _POS_INT,
                                 "minItems": 1},
                "small_pretrain_steps": _POS_INT,
            },
        },
        "gap": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_scenes": _POS_INT,
            },
        },
        "generate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "image_hw": _POS_INT,
                "hidden": _POS_INT,
                "layers": _POS_INT,
                "cond_dim": _POS_INT,
                "temb_dim": _POS_INT,
                "ddpm_steps": _POS_INT,
                "colors": {"type": "array", "minItems": 2, "maxItems": 2,
                           "items": {"type": "array", "minItems": 3,
                                     "maxItems": 3, "items": _NONNEG_NUM}},
                "jitter": _NONNEG_NUM,
                "images_per_concept": _POS_INT,
                "train_steps": _NONNEG_INT,
                "lr": _POS_NUM,
                "batch_size": _POS_INT,
                "n_samples": _POS_INT,
                "ppm_samples": _NONNEG_INT,
            },
        },
    },
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def validate_config(config: dict, source: str = "config"):
    """Schema-check a (possibly partial) document; raise listing every
    violation as a JSON-pointer path."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{_pointer(list(e.absolute_path))}: {e.message}" for e in errors]
        raise ConfigError(f"{source}: " + "; ".join(lines))


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def coerce_value(raw):
    """Parse a CLI override value: JSON if it parses, bare string otherwise."""
    if not isinstance(raw, str):
        return raw
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(config: dict, overrides: dict) -> dict:
    """Set dotted-path keys ('tune.lr') on a copy of config.

    Paths must name existing keys; the result must still validate, so an
    override can never smuggle in an unknown or ill-typed setting.
    """
    out = copy.deepcopy(config)
    for path, raw in overrides.items():
        parts = path.split(".")
        node = out
        for i, part in enumerate(parts[:-1]):
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(
                    f"override {path!r}: no such section "
                    f"{_pointer(parts[:i + 1])}")
            node = node[part]
        leaf = parts[-1]
        if not isinstance(node, dict) or leaf not in node:
            raise ConfigError(f"override {path!r}: unknown configuration key "
                              f"{_pointer(parts)}")
        node[leaf] = coerce_value(raw)
    validate_config(out, source="overrides")
    return out


def load_config(path=None, overrides: dict = None) -> dict:
    """Resolve defaults <- file <- overrides, validating at each layer.

    path None or an empty file yields pure defaults.  The file may be
    partial; its keys are deep-merged over the defaults.  overrides maps
    dotted paths to values (CLI flags land here) and wins over the file.
    """
    document = {}
    if path:
        try:
            text = open(path).read()
        except OSError as e:
            raise ConfigError(f"{path}: {e.strerror or e}") from None
        if text.strip():
            try:
                document = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: unparseable JSON: {e}") from None
            if not isinstance(document, dict):
                raise ConfigError(f"{path}: top level must be a JSON object")
        validate_config(document, source=str(path))
    config = _merge(default_config(), document)
    validate_config(config)
    if overrides:
        config = apply_overrides(config, overrides)
    return config


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    """12-hex content address of a resolved configuration."""
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:12]


def scoped_hash(config: dict, *sections: str) -> str:
    """Hash of the seed plus only the sections that determine an artifact,
    so e.g. changing eval settings does not orphan a checkpoint."""
    subset = {"seed": config["seed"]}
    for name in sections:
        subset[name] = config[name]
    return config_hash(subset)


def dump_config(config: dict = None) -> str:
    """Pretty canonical form with every default explicit."""
    return json.dumps(config or default_config(), indent=1, sort_keys=True)


def resolve_root(config: dict) -> str:
    """Artifact root: config out_dir, else $CONES_LAB_HOME, else ./cones_runs."""
    if config.get("out_dir"):
        return config["out_dir"]
    return os.environ.get("CONES_LAB_HOME") or os.path.join(os.getcwd(), "cones_runs")
