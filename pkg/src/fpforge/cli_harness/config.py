"""Experiment configuration: JSON parsing, defaults, strict validation.

Unknown keys and type mismatches are rejected with the dotted JSON path, so
a typo like "detector.lrr" fails loudly instead of silently using defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..augment import PerturbConfig
from ..detector_eval import VARIANTS, DetectorTrainConfig
from ..extractor import ExtractorTrainConfig
from ..synthgan import DatasetConfig

EXPERIMENT_KINDS = (
    "cross_gan", "cross_category", "category_sweep", "ablation_adv", "ablation_detector",
)
ARMS = ("none", "scaling", "mixup")


class ConfigError(ValueError):
    """Invalid experiment configuration; message carries the JSON path."""


_SCHEMA = {
    "experiment": (str, None),
    "seed": (int, None),
    "out": (str, ""),
    "cache_dir": (str, ""),
    "train_category": (str, ""),
    "category_counts": (list, [1, 2, 4]),
    "ablation_strategy": (str, "mixup"),
    "dataset": {
        "side": (int, 64),
        "n_train_real": (int, 500),
        "n_train_fake": (int, 500),
        "n_test_real": (int, 200),
        "n_test_fake_per_gan": (int, 200),
        "seen_gan_ids": (list, ["blockres2"]),
    },
    "extractor": {
        "lambda_adv": (float, 1e-4),
        "lr_e": (float, 1e-3),
        "lr_d": (float, 1e-3),
        "epochs": (int, 40),
        "batch_size": (int, 32),
        "adv_enabled": (bool, True),
    },
    "perturb": {
        "alpha0": (float, 5.0),
        "n": (int, 2),
        "apply_prob": (float, 0.8),
        "alpha_min": (float, 0.0),
    },
    "detector": {
        "lr": (float, 1e-4),
        "epochs": (int, 100),
        "batch_size": (int, 32),
        "variant": (str, "small"),
    },
}

_REQUIRED = ("experiment", "seed")


def _check_type(value, expected, path: str):
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected number, got {type(value).__name__}")
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected integer, got {type(value).__name__}")
        return value
    if expected is bool and not isinstance(value, bool):
        raise ConfigError(f"{path}: expected boolean, got {type(value).__name__}")
    if expected is str and not isinstance(value, str):
        raise ConfigError(f"{path}: expected string, got {type(value).__name__}")
    if expected is list and not isinstance(value, list):
        raise ConfigError(f"{path}: expected list, got {type(value).__name__}")
    return value


def _apply_schema(raw: dict, schema: dict, prefix: str = "") -> dict:
    out = {}
    for key, value in raw.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(f"unknown key {path!r}")
        spec = schema[key]
        if isinstance(spec, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: expected object, got {type(value).__name__}")
            out[key] = _apply_schema(value, spec, prefix=f"{path}.")
        else:
            out[key] = _check_type(value, spec[0], path)
    for key, spec in schema.items():
        if key in out:
            continue
        if isinstance(spec, dict):
            out[key] = _apply_schema({}, spec, prefix=f"{prefix}{key}.")
        else:
            out[key] = spec[1]
    return out


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    out: str = ""
    cache_dir: str = ""
    train_category: str = ""
    category_counts: list = field(default_factory=lambda: [1, 2, 4])
    ablation_strategy: str = "mixup"
    dataset: dict = field(default_factory=dict)
    extractor: dict = field(default_factory=dict)
    perturb: dict = field(default_factory=dict)
    detector: dict = field(default_factory=dict)

    def dataset_config(self) -> DatasetConfig:
        d = self.dataset
        return DatasetConfig(
            side=d["side"],
            seen_gan_ids=tuple(d["seen_gan_ids"]),
            n_train_real=d["n_train_real"],
            n_train_fake=d["n_train_fake"],
            n_test_real=d["n_test_real"],
            n_test_fake_per_gan=d["n_test_fake_per_gan"],
        )

    def extractor_config(self, adv_enabled=None) -> ExtractorTrainConfig:
        e = self.extractor
        return ExtractorTrainConfig(
            lambda_adv=e["lambda_adv"], lr_e=e["lr_e"], lr_d=e["lr_d"],
            epochs=e["epochs"], batch_size=e["batch_size"], seed=self.seed,
            adv_enabled=e["adv_enabled"] if adv_enabled is None else adv_enabled,
        )

    def perturb_config(self, strategy: str) -> PerturbConfig:
        p = self.perturb
        return PerturbConfig(strategy=strategy, alpha0=p["alpha0"], n=p["n"],
                             apply_prob=p["apply_prob"], alpha_min=p["alpha_min"])

    def detector_config(self, variant=None) -> DetectorTrainConfig:
        d = self.detector
        return DetectorTrainConfig(
            lr=d["lr"], epochs=d["epochs"], batch_size=d["batch_size"],
            seed=self.seed, variant=d["variant"] if variant is None else variant,
        )

    def to_canonical(self) -> dict:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "train_category": self.train_category,
            "category_counts": list(self.category_counts),
            "ablation_strategy": self.ablation_strategy,
            "dataset": dict(sorted(self.dataset.items())),
            "extractor": dict(sorted(self.extractor.items())),
            "perturb": dict(sorted(self.perturb.items())),
            "detector": dict(sorted(self.detector.items())),
        }


def validate_config_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"top level: expected object, got {type(raw).__name__}")
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    filled = _apply_schema(raw, _SCHEMA)
    if filled["experiment"] not in EXPERIMENT_KINDS:
        raise ConfigError(
            f"experiment: unknown kind {filled['experiment']!r}, "
            f"expected one of {EXPERIMENT_KINDS}")
    if filled["seed"] < 0:
        raise ConfigError("seed: must be >= 0")
    if filled["detector"]["variant"] not in VARIANTS:
        raise ConfigError(
            f"detector.variant: unknown variant {filled['detector']['variant']!r}")
    if filled["ablation_strategy"] not in ("scaling", "mixup"):
        raise ConfigError("ablation_strategy: must be 'scaling' or 'mixup'")
    for i, c in enumerate(filled["category_counts"]):
        if isinstance(c, bool) or not isinstance(c, int) or c < 1:
            raise ConfigError(f"category_counts[{i}]: expected positive integer")
    cfg = ExperimentConfig(**filled)
    ds = cfg.dataset_config()  # validates ids, counts, side
    cat_ids = [c.category_id for c in ds.categories]
    if cfg.train_category and cfg.train_category not in cat_ids:
        raise ConfigError(f"train_category: {cfg.train_category!r} not in dataset categories")
    if max(cfg.category_counts) > len(ds.categories):
        raise ConfigError("category_counts: entry exceeds number of categories")
    return cfg


def parse_config(path) -> ExperimentConfig:
    """Read, validate, and default-fill a JSON experiment config."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not text.strip():
        raise ConfigError(f"config {path} is empty")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    try:
        return validate_config_dict(raw)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from e


def config_to_json(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_canonical(), sort_keys=True, indent=2)
