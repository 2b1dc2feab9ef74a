"""Model configuration: validated dataclass, JSON round-trip, overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .fusion import FUSION_SCHEMES

AGGREGATES = ("sum", "concat")


@dataclass
class ModelConfig:
    volume_shape: tuple[int, int, int] = (16, 8, 16)
    feature_shape: tuple[int, int, int] = (4, 2, 4)
    channels: int = 16
    num_classes: int = 4
    kernel_size: int = 3
    rotations: list[tuple[float, float, float]] = field(
        default_factory=lambda: [(0.0, 0.0, 0.0), (45.0, 0.0, 0.0),
                                 (90.0, 0.0, 0.0), (135.0, 0.0, 0.0)]
    )
    token_size: int = 8
    fusion: str = "all-for-one-tokens"
    use_cvtr: bool = True
    aggregate: str = "sum"
    encoder_depth: int = 1
    attention_heads: int = 1
    attn_scale: bool = True
    seed: int = 0

    def __post_init__(self):
        self.volume_shape = tuple(int(v) for v in self.volume_shape)
        self.feature_shape = tuple(int(v) for v in self.feature_shape)
        self.rotations = [tuple(float(a) for a in row) for row in self.rotations]
        self.validate()

    def validate(self) -> None:
        if len(self.volume_shape) != 3 or len(self.feature_shape) != 3:
            raise ConfigError("volume_shape and feature_shape must have 3 extents")
        if min(self.volume_shape) < 1 or min(self.feature_shape) < 1:
            raise ConfigError("extents must be positive")
        factors = {v // f for v, f in zip(self.volume_shape, self.feature_shape)}
        for v, f in zip(self.volume_shape, self.feature_shape):
            if v % f:
                raise ConfigError(
                    f"feature extents {self.feature_shape} must divide "
                    f"volume extents {self.volume_shape}"
                )
        if len(factors) != 1:
            raise ConfigError("downsampling factor must match across axes")
        factor = factors.pop()
        if factor & (factor - 1):
            raise ConfigError(f"downsampling factor {factor} must be a power of two")
        if self.channels < 1:
            raise ConfigError("channels must be >= 1")
        if self.num_classes < 2:
            raise ConfigError("need at least 2 classes (empty + one occupied)")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if not self.rotations:
            raise ConfigError("rotation set must not be empty")
        for row in self.rotations:
            if len(row) != 3:
                raise ConfigError(f"rotation triple expected, got {row}")
        n_voxels = int(np.prod(self.feature_shape))
        if not 1 <= self.token_size < n_voxels:
            raise ConfigError(
                f"token_size must be in [1, {n_voxels}) for feature shape "
                f"{self.feature_shape}, got {self.token_size}"
            )
        if self.fusion not in FUSION_SCHEMES:
            raise ConfigError(f"fusion must be one of {FUSION_SCHEMES}")
        if self.aggregate not in AGGREGATES:
            raise ConfigError(f"aggregate must be one of {AGGREGATES}")
        if self.encoder_depth < 1:
            raise ConfigError("encoder_depth must be >= 1")
        if self.attention_heads < 1 or self.channels % self.attention_heads:
            raise ConfigError(
                f"attention_heads must divide channels "
                f"({self.attention_heads} vs {self.channels})"
            )

    @property
    def num_views(self) -> int:
        return len(self.rotations)

    @property
    def downsample_stages(self) -> int:
        factor = self.volume_shape[0] // self.feature_shape[0]
        return int(factor).bit_length() - 1

    @classmethod
    def toy(cls, **overrides) -> "ModelConfig":
        return cls(**overrides)

    @classmethod
    def full_scale(cls, **overrides) -> "ModelConfig":
        base = dict(
            volume_shape=(60, 36, 60),
            feature_shape=(15, 9, 15),
            channels=16,
            num_classes=12,
            token_size=75,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["volume_shape"] = list(self.volume_shape)
        d["feature_shape"] = list(self.feature_shape)
        d["rotations"] = [list(r) for r in self.rotations]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def with_overrides(self, pairs: list[str]) -> "ModelConfig":
        """Apply ``key=value`` strings; values parse as JSON when possible."""
        d = self.to_dict()
        for pair in pairs:
            if "=" not in pair:
                raise ConfigError(f"override {pair!r} is not key=value")
            key, raw = pair.split("=", 1)
            key = key.strip()
            if key not in d:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            d[key] = value
        return ModelConfig.from_dict(d)


def load_config(path) -> ModelConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ModelConfig.from_dict(data)


def save_config(path, config: ModelConfig) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
