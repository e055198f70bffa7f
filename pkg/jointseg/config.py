"""
Flat key=value run configuration.

    # comment
    model.feature_maps = 64
    model.dilations = 5,10,15
    train.alpha = 0.9

Keys are `<section>.<field>`; unknown keys and unparsable values are rejected
with the offending line number. `dump_config` writes the canonical form
(sorted keys, one per line) and `parse_config(dump_config(c)) == c`.
"""

import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Iterator, Mapping, Optional, Tuple, Union

from .errors import ConfigError

logger = logging.getLogger(__name__)

# === Constants ===
MODEL_STRIDE = 64
ENCODER_STRIDE = 16
DEFAULT_LISTEN = "127.0.0.1:7878"
ENV_LISTEN = "JOINTSEG_LISTEN"
PRESETS = ("desk", "coco", "cityscapes")


@dataclass(frozen=True)
class ModelConfig:
    num_classes: int = 6
    feature_maps: int = 64
    groups: int = 4
    dilations: Tuple[int, ...] = (5, 10, 15)
    repetitions: int = 1
    overparameterize: bool = True
    latent_channels: int = 128
    encoder_stem: int = 16
    encoder_widths: Tuple[int, ...] = (32, 64, 96)
    encoder_blocks: int = 2
    model_id: int = 1


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.9
    lr_main: float = 1e-3
    lr_aux: float = 1e-3
    max_steps: int = 3000
    epochs: int = 0
    batch_size: int = 8
    beta1: float = 0.9
    beta2: float = 0.99
    weight_decay: float = 0.0
    clip_norm: float = 1.0
    seed: int = 0
    log_every: int = 50
    checkpoint_every: int = 500


@dataclass(frozen=True)
class DataConfig:
    image_size: int = 64
    train_count: int = 256
    eval_count: int = 50
    noise: float = 0.04
    seed: int = 1234


@dataclass(frozen=True)
class EndpointConfig:
    listen: str = DEFAULT_LISTEN
    timeout: float = 30.0
    workers: int = 4


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    endpoint: EndpointConfig = field(default_factory=EndpointConfig)

    def steps_per_epoch(self) -> int:
        return max(1, -(-self.data.train_count // self.train.batch_size))

    def total_steps(self) -> int:
        """τ_max: epochs win over max_steps when set."""
        if self.train.epochs > 0:
            return self.train.epochs * self.steps_per_epoch()
        return self.train.max_steps


SECTIONS = ("model", "train", "data", "endpoint")


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(raw: str, default: Any) -> Any:
    text = raw.strip()
    if isinstance(default, bool):
        lowered = text.lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if not parts:
            raise ValueError("empty list")
        return tuple(int(p) for p in parts)
    return text


def _iter_items(config: RunConfig) -> Iterator[Tuple[str, Any]]:
    for section in SECTIONS:
        block = getattr(config, section)
        for f in fields(block):
            yield f"{section}.{f.name}", getattr(block, f.name)


def validate_config(config: RunConfig) -> RunConfig:
    m, t, d = config.model, config.train, config.data
    if m.num_classes < 2:
        raise ConfigError(f"model.num_classes must be at least 2, got {m.num_classes}")
    if m.groups < 1 or m.feature_maps % m.groups:
        raise ConfigError(
            f"model.feature_maps={m.feature_maps} not divisible by model.groups={m.groups}"
        )
    if len(set(m.dilations)) != len(m.dilations) or min(m.dilations) < 1:
        raise ConfigError(f"model.dilations must be distinct positive integers: {m.dilations}")
    if m.repetitions < 1:
        raise ConfigError(f"model.repetitions must be >= 1, got {m.repetitions}")
    if len(m.encoder_widths) != 3 or m.encoder_blocks < 1:
        raise ConfigError("model.encoder_widths needs 3 stage widths and encoder_blocks >= 1")
    if not 0 < m.model_id < 1 << 16:
        raise ConfigError(f"model.model_id must fit in u16, got {m.model_id}")
    if not 0.0 < t.alpha < 1.0:
        raise ConfigError(f"train.alpha must lie in (0, 1), got {t.alpha}")
    if t.batch_size < 1 or t.max_steps < 1:
        raise ConfigError("train.batch_size and train.max_steps must be positive")
    if d.image_size % MODEL_STRIDE:
        raise ConfigError(f"data.image_size must be a multiple of {MODEL_STRIDE}")
    return config


def parse_config(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    """Apply `key = value` lines on top of `base` (defaults when omitted)."""
    config = base or RunConfig()
    updates: Dict[str, Dict[str, Any]] = {s: {} for s in SECTIONS}
    defaults = dict(_iter_items(config))
    for lineno, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"line {lineno}: expected key = value, got {content!r}")
        key, raw = (part.strip() for part in content.split("=", 1))
        if key not in defaults:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            value = _parse_value(raw, defaults[key])
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value for {key}: {e}") from e
        section, name = key.split(".", 1)
        updates[section][name] = value
    merged = RunConfig(
        **{s: replace(getattr(config, s), **updates[s]) for s in SECTIONS}
    )
    return validate_config(merged)


def dump_config(config: RunConfig) -> str:
    lines = [f"{key} = {_format_value(value)}" for key, value in sorted(_iter_items(config))]
    return "\n".join(lines) + "\n"


def apply_overrides(config: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    """Dotted-key overrides from the command line; `None` values are skipped."""
    lines = [f"{k} = {_format_value(v)}" for k, v in overrides.items() if v is not None]
    return parse_config("\n".join(lines), base=config) if lines else config


def preset(name: str) -> RunConfig:
    if name == "desk":
        return RunConfig()
    if name == "coco":
        return RunConfig(
            model=ModelConfig(num_classes=21, feature_maps=256, repetitions=1),
            train=TrainConfig(lr_main=0.01, lr_aux=0.001, batch_size=16, epochs=42),
            data=DataConfig(image_size=512),
        )
    if name == "cityscapes":
        return RunConfig(
            model=ModelConfig(num_classes=19, feature_maps=512, repetitions=3),
            train=TrainConfig(lr_main=0.001, lr_aux=0.001, batch_size=8, max_steps=80000),
            data=DataConfig(image_size=512),
        )
    raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


def apply_environment(config: RunConfig) -> RunConfig:
    listen = os.getenv(ENV_LISTEN)
    if listen:
        logger.debug(f"CONFIG_ENV: {ENV_LISTEN}={listen}")
        return replace(config, endpoint=replace(config.endpoint, listen=listen))
    return config


def load_config(
    path: Optional[Union[str, Path]] = None, preset_name: str = "desk"
) -> RunConfig:
    """Preset, then the optional config file, then environment overrides."""
    config = preset(preset_name)
    if path is not None:
        source = Path(path)
        if not source.exists():
            raise ConfigError(f"config file not found: {source}")
        config = parse_config(source.read_text(encoding="utf-8"), base=config)
        logger.info(f"CONFIG_LOADED: {source} (preset {preset_name})")
    return apply_environment(validate_config(config))


def parse_listen(listen: str) -> Tuple[str, int]:
    host, sep, port = listen.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"listen address must be host:port, got {listen!r}")
    return host or "127.0.0.1", int(port)
