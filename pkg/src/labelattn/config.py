"""Model and training hyperparameters, serializable to plain dicts."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError

MULTI_CLASS = "multi_class"
MULTI_LABEL = "multi_label"

LOSS_CROSS_ENTROPY = "cross_entropy"
LOSS_BCE = "bce"
LOSS_F_MEASURE = "f_measure"

# which losses are legal for which task mode
LOSSES_BY_MODE = {
    MULTI_CLASS: (LOSS_CROSS_ENTROPY,),
    MULTI_LABEL: (LOSS_F_MEASURE, LOSS_BCE),
}


@dataclass
class ModelConfig:
    """Architecture geometry. Desk-scale defaults; width stays divisible
    by both head counts so per-head splits are exact."""

    vocab_size: int
    num_labels: int
    d_h: int = 64
    num_layers: int = 2
    enc_heads: int = 4
    label_heads: int = 4
    ffn_mult: int = 4
    max_seq_len: int = 128
    label_attention_blocks: int = 1
    mode: str = MULTI_CLASS
    attention_scale: str = "per_head"  # or "full_width"
    dropout: float = 0.0

    def __post_init__(self):
        counts = {
            "vocab_size": self.vocab_size,
            "num_labels": self.num_labels,
            "d_h": self.d_h,
            "num_layers": self.num_layers,
            "enc_heads": self.enc_heads,
            "label_heads": self.label_heads,
            "ffn_mult": self.ffn_mult,
            "max_seq_len": self.max_seq_len,
            "label_attention_blocks": self.label_attention_blocks,
        }
        for name, value in counts.items():
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.d_h % self.enc_heads:
            raise ConfigError(f"d_h={self.d_h} not divisible by enc_heads={self.enc_heads}")
        if self.d_h % self.label_heads:
            raise ConfigError(f"d_h={self.d_h} not divisible by label_heads={self.label_heads}")
        if self.mode not in (MULTI_CLASS, MULTI_LABEL):
            raise ConfigError(f"mode must be {MULTI_CLASS} or {MULTI_LABEL}, got {self.mode!r}")
        if self.attention_scale not in ("per_head", "full_width"):
            raise ConfigError(f"attention_scale must be per_head or full_width, got {self.attention_scale!r}")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.max_seq_len < 3:
            raise ConfigError("max_seq_len must leave room for [CLS] and [SEP]")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainConfig:
    """Optimization recipe: AdamW with slanted-triangular schedules for the
    encoder and label-attention groups and a constant rate for the head."""

    epochs: int = 30
    batch_size: int = 42
    warm_up_fraction: float = 0.1
    lr_encoder_max: float = 5e-05
    lr_label_attention_max: float = 4e-02
    lr_head: float = 1e-03
    stlr_ratio: float = 32.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-08
    weight_decay: float = 0.01
    seed: int = 0
    loss: str = LOSS_CROSS_ENTROPY
    threshold: float = 0.5

    def __post_init__(self):
        if self.epochs < 1 or int(self.epochs) != self.epochs:
            raise ConfigError(f"epochs must be a positive integer, got {self.epochs!r}")
        if self.batch_size < 1 or int(self.batch_size) != self.batch_size:
            raise ConfigError(f"batch_size must be a positive integer, got {self.batch_size!r}")
        if not (0.0 < self.warm_up_fraction < 1.0):
            raise ConfigError(f"warm_up_fraction must be in (0, 1), got {self.warm_up_fraction}")
        for name in ("lr_encoder_max", "lr_label_attention_max", "lr_head"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.stlr_ratio < 1:
            raise ConfigError(f"stlr_ratio must be >= 1, got {self.stlr_ratio}")
        if self.loss not in (LOSS_CROSS_ENTROPY, LOSS_BCE, LOSS_F_MEASURE):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if not (0.0 < self.threshold < 1.0):
            raise ConfigError(f"threshold must be in (0, 1), got {self.threshold}")

    def check_mode(self, mode: str) -> None:
        if self.loss not in LOSSES_BY_MODE[mode]:
            allowed = ", ".join(LOSSES_BY_MODE[mode])
            raise ConfigError(f"loss {self.loss!r} is not valid for {mode} (use one of: {allowed})")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


def default_loss_for(mode: str) -> str:
    return LOSS_CROSS_ENTROPY if mode == MULTI_CLASS else LOSS_F_MEASURE
