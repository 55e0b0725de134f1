"""Declarative run configuration: a flat dataclass bound to INI sections.

Every field has a pinned default so a missing key never changes silently
between runs; unknown sections or keys are rejected outright.
"""

import configparser
import io
from dataclasses import dataclass, fields

OPTIMIZERS = ("sgd", "adam")
SCHEDULERS = ("cosine", "constant")
AUGMENTATIONS = ("none", "mixup", "starmix")
PRECISIONS = ("train", "test")
SPLITS = ("auto", "session", "stratified")


@dataclass
class RunConfig:
    # [dataset] empty data_root generates the synthetic set under out_dir
    data_root: str = ""
    side: int = 32
    split: str = "auto"
    split_seed: int = 0
    synthetic_classes: int = 10
    synthetic_images: int = 50
    synthetic_seed: int = 7
    # [model] "toy", "full" or a path to a model config file
    model: str = "toy"
    # [optim]
    optimizer: str = "sgd"
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0001
    # [train]
    epochs: int = 30
    batch_size: int = 32
    scheduler: str = "cosine"
    seed: int = 0
    precision: str = "train"
    # [mix]
    augmentation: str = "none"
    alpha: float = 1.0
    threshold_lo: float = 0.3
    threshold_hi: float = 0.7
    # [output]
    out_dir: str = "runs/exp"

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"scheduler must be one of {SCHEDULERS}, got {self.scheduler!r}")
        if self.augmentation not in AUGMENTATIONS:
            raise ValueError(
                f"augmentation must be one of {AUGMENTATIONS}, got {self.augmentation!r}"
            )
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {PRECISIONS}, got {self.precision!r}")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.weight_decay < 0 or self.momentum < 0:
            raise ValueError("momentum and weight_decay must be non-negative")
        if not 0.0 <= self.threshold_lo <= self.threshold_hi:
            raise ValueError(
                f"thresholds must satisfy 0 <= lo <= hi, got "
                f"({self.threshold_lo}, {self.threshold_hi})"
            )
        if self.side < 1:
            raise ValueError(f"side must be positive, got {self.side}")


SECTION_FIELDS = {
    "dataset": (
        "data_root",
        "side",
        "split",
        "split_seed",
        "synthetic_classes",
        "synthetic_images",
        "synthetic_seed",
    ),
    "model": ("model",),
    "optim": ("optimizer", "lr", "momentum", "weight_decay"),
    "train": ("epochs", "batch_size", "scheduler", "seed", "precision"),
    "mix": ("augmentation", "alpha", "threshold_lo", "threshold_hi"),
    "output": ("out_dir",),
}

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _format_value(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_config(config):
    """INI text for a RunConfig; parse_config inverts it exactly."""
    parser = configparser.ConfigParser()
    for section, names in SECTION_FIELDS.items():
        parser[section] = {
            name: _format_value(getattr(config, name)) for name in names
        }
    buffer = io.StringIO()
    parser.write(buffer)
    return buffer.getvalue()


def parse_config(text):
    """Parse INI text into a RunConfig, rejecting unknown sections or keys."""
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValueError(f"malformed config: {exc}") from exc
    values = {}
    known_sections = set(SECTION_FIELDS)
    for section in parser.sections():
        if section not in known_sections:
            raise ValueError(f"unknown config section [{section}]")
        allowed = set(SECTION_FIELDS[section])
        for key, raw in parser[section].items():
            if key not in allowed:
                raise ValueError(f"unknown config key '{key}' in section [{section}]")
            kind = _FIELD_TYPES[key]
            try:
                values[key] = kind(raw) if kind in (int, float) else raw
            except ValueError as exc:
                raise ValueError(
                    f"config key '{key}' expects {kind.__name__}, got {raw!r}"
                ) from exc
    return RunConfig(**values)


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
