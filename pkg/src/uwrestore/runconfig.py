"""Flat key=value run configuration shared by the CLI and experiment plans.

Lines hold one ``key=value`` each; blank lines and ``#`` comments are
ignored. Unknown keys are rejected by name so typos cannot silently fall
back to defaults. Booleans are spelled ``true``/``false``.
"""

from dataclasses import dataclass

from .errors import ConfigError
from .losses import LossWeights
from .network import ModelConfig
from .trainer import LrSchedule

KEY_TYPES = {
    # model architecture
    "base_width": int,
    "levels": int,
    "blocks_per_level": int,
    "pooling_ratio": float,
    "dct_groups": int,
    "enable_dfesa": bool,
    "enable_sfm": bool,
    "seed": int,
    # data pipeline
    "patch": int,
    "flips": bool,
    "data_seed": int,
    # optimisation
    "lr_max": float,
    "lr_min": float,
    "lambda_l1": float,
    "lambda_fft": float,
    "steps": int,
    "batch": int,
    "checkpoint_every": int,
}

DEFAULTS = {
    "patch": 64,
    "flips": True,
    "data_seed": 0,
    "lr_max": 1e-4,
    "lr_min": 1e-6,
    "lambda_l1": 1.0,
    "lambda_fft": 0.1,
    "steps": 1000,
    "batch": 4,
    "checkpoint_every": 0,
}


def parse_value(key, text):
    if key not in KEY_TYPES:
        raise ConfigError(f"unknown config key: {key}")
    kind = KEY_TYPES[key]
    if kind is bool:
        if text not in ("true", "false"):
            raise ConfigError(f"key {key}: expected true or false, got {text!r}")
        return text == "true"
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"key {key}: cannot parse {text!r} as {kind.__name__}") from None


def parse_lines(lines, where=""):
    """Parse key=value lines into a typed dict; duplicate keys rejected."""
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{where}line {lineno}: expected key=value, got {raw.strip()!r}")
        key, text = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(f"{where}line {lineno}: duplicate key {key}")
        values[key] = parse_value(key, text)
    return values


def parse_run_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_lines(fh.readlines(), where=f"{path}: ")


@dataclass
class RunSettings:
    """Everything one training run needs beyond the dataset root."""
    cfg: ModelConfig
    patch: int
    flips: bool
    data_seed: int
    schedule: LrSchedule
    weights: LossWeights
    steps: int
    batch: int
    checkpoint_every: int


def settings_from_values(values):
    """Merge defaults with parsed values and validate every component."""
    merged = dict(DEFAULTS)
    merged.update(values)
    cfg = ModelConfig(**{k: merged[k] for k in
                         ("base_width", "levels", "blocks_per_level", "pooling_ratio",
                          "dct_groups", "enable_dfesa", "enable_sfm", "seed")
                         if k in merged}).validate()
    steps = merged["steps"]
    if steps < 0:
        raise ConfigError(f"steps must be >= 0, got {steps}")
    if merged["batch"] < 1:
        raise ConfigError(f"batch must be >= 1, got {merged['batch']}")
    if merged["checkpoint_every"] < 0:
        raise ConfigError(f"checkpoint_every must be >= 0, got {merged['checkpoint_every']}")
    schedule = LrSchedule(merged["lr_max"], merged["lr_min"], steps).validate()
    weights = LossWeights(merged["lambda_l1"], merged["lambda_fft"]).validate()
    return RunSettings(
        cfg=cfg, patch=merged["patch"], flips=merged["flips"],
        data_seed=merged["data_seed"], schedule=schedule, weights=weights,
        steps=steps, batch=merged["batch"],
        checkpoint_every=merged["checkpoint_every"])
