"""Flat key=value run configuration.

A config file holds lines like

    train.epochs = 20
    net.widths = 16,32,48,64
    degrade.jpeg_p = 0.5

Keys are group.field with groups net/train/degrade/data; every field has
a default and values are coerced to the default's type. Unknown keys are
hard errors so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field

from .degrade import DegradationSpec
from .errors import ConfigurationError
from .network import NetworkConfig
from .train import TrainConfig


@dataclass
class DataConfig:
    size: int = 64
    train_n: int = 256
    test_n: int = 64
    seed: int = 7
    test_seed: int = 1007
    noisy_seed: int = 2024


@dataclass
class RunConfig:
    net: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    degrade: DegradationSpec = field(default_factory=DegradationSpec)
    data: DataConfig = field(default_factory=DataConfig)

    def validate(self):
        self.net.validate()
        self.train.validate()
        self.degrade.validate()
        if self.data.size % 32 != 0:
            raise ConfigurationError(
                f"data.size {self.data.size} must be a multiple of 32")
        return self


def _coerce(key, text, default):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            elem = type(default[0])
            return tuple(elem(part.strip()) for part in text.split(","))
        if isinstance(default, str):
            return text
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {exc}") from None
    raise ConfigurationError(f"unsupported config type for {key}")


def flatten(cfg):
    """RunConfig -> {'group.field': value} in declaration order."""
    out = {}
    for group_field in dataclasses.fields(cfg):
        group = getattr(cfg, group_field.name)
        for f in dataclasses.fields(group):
            out[f"{group_field.name}.{f.name}"] = getattr(group, f.name)
    return out


def apply_setting(cfg, key, raw_value):
    if "." not in key:
        raise ConfigurationError(f"config key {key!r} must look like group.field")
    group_name, field_name = key.split(".", 1)
    if not hasattr(cfg, group_name) or group_name not in (
            f.name for f in dataclasses.fields(cfg)):
        raise ConfigurationError(f"unknown config group {group_name!r} in {key!r}")
    group = getattr(cfg, group_name)
    if field_name not in (f.name for f in dataclasses.fields(group)):
        raise ConfigurationError(f"unknown config key {key!r}")
    default = getattr(group, field_name)
    setattr(group, field_name, _coerce(key, raw_value, default))


def load_config(path=None, overrides=None):
    """Build a RunConfig from defaults, a file, then override pairs."""
    cfg = RunConfig()
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise ConfigurationError(
                        f"{path}:{lineno}: expected key = value, got {stripped!r}")
                key, _, value = stripped.partition("=")
                apply_setting(cfg, key.strip(), value)
    for key, value in (overrides or {}).items():
        apply_setting(cfg, key, str(value))
    return cfg.validate()


def config_hash(cfg):
    """Stable short digest of every setting, for run manifests."""
    lines = [f"{k}={v!r}" for k, v in sorted(flatten(cfg).items())]
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()[:16]
