from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..errors import DomainError


@dataclass
class TrackerConfig:
    n_beams: int = 64  # M
    window: int = 3  # W_b
    input_mode: str = "lidar"  # lidar | gnss
    pair_mode: bool = False
    n_tx: int = 64
    n_rx: int = 1
    # CNN
    stem_channels: int = 8
    stem_stride: int = 2
    block_channels: tuple[int, ...] = (8, 16)
    block_strides: tuple[int, ...] = (1, 2)
    coord_channels: bool = True  # append offsets from the receiver and transmitter markers
    feature_dim: int = 32
    lstm_hidden: int = 64
    # optimisation
    lr: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)
    topk: tuple[int, ...] = field(default=(1, 2, 3, 4, 5, 6, 7, 8, 9, 10))

    def __post_init__(self):
        self.block_channels = tuple(self.block_channels)
        self.block_strides = tuple(self.block_strides)
        self.split = tuple(self.split)
        self.topk = tuple(self.topk)
        if self.window < 1:
            raise DomainError("window (W_b) must be >= 1")
        if self.n_beams < 2:
            raise DomainError("need at least 2 beams")
        if self.input_mode not in ("lidar", "gnss"):
            raise DomainError(f"unknown input mode {self.input_mode!r}")
        if len(self.block_channels) != len(self.block_strides):
            raise DomainError("one stride per residual block")
        if abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise DomainError(f"split fractions must sum to 1, got {self.split}")

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrackerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "TrackerConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")
