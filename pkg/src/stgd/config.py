"""Run configuration: one flat JSON document, every field defaulted."""

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Union

from .errors import ConfigurationError, ValidationError
from .losses import LossWeights


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    # clip geometry
    T: int = 8
    H: int = 8
    W: int = 8
    C: int = 16
    L: int = 6
    d_text: int = 32
    # frozen backbone
    d: int = 64
    stage1_dim: int = 32
    n_heads: int = 4
    backbone_ffn_mult: int = 32
    n_decoder_layers: int = 2
    # query refinement
    N_q: int = 4
    K: int = 2
    # trainable insertions
    use_adapters: bool = True
    adapter_ratio: int = 4
    adapter_kernel: int = 3
    lora_rank: int = 4
    lora_alpha: float = 8.0
    temporal_layers: int = 2
    temporal_ffn_mult: int = 2
    rel_pos_clip: int = 32
    # objective
    sigma: float = 1.0
    loss_weights: LossWeights = field(default_factory=LossWeights)
    # optimiser
    lr: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    steps: int = 800
    batch_size: int = 8
    log_every: int = 100
    # synthetic data
    n_train: int = 64
    n_val: int = 16
    n_patterns: int = 8
    n_fillers: int = 16
    signal_amplitude: float = 1.5
    noise_std: float = 0.3
    text_noise: float = 0.1

    def __post_init__(self):
        self.validate()

    @property
    def n_visual_tokens(self) -> int:
        return (self.H // 4) * (self.W // 4)

    @property
    def stage_dims(self):
        return (self.stage1_dim, self.d)

    def validate(self):
        positive = ["T", "H", "W", "C", "L", "d_text", "d", "stage1_dim", "n_heads", "backbone_ffn_mult",
                    "n_decoder_layers", "N_q", "K", "adapter_ratio", "adapter_kernel", "lora_rank",
                    "temporal_layers", "temporal_ffn_mult", "rel_pos_clip", "steps", "batch_size",
                    "log_every", "n_train", "n_val", "n_patterns", "n_fillers"]
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ["sigma", "lr", "adam_eps", "signal_amplitude"]:
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.T < 2:
            raise ConfigurationError(f"T must be at least 2 for a temporal segment, got {self.T}")
        if self.H % 4 or self.W % 4:
            raise ConfigurationError(f"H and W must be divisible by 4 (two 2x2 stages), got {self.H}x{self.W}")
        if self.d % self.n_heads:
            raise ConfigurationError(f"d={self.d} not divisible by n_heads={self.n_heads}")
        if self.K > self.N_q:
            raise ConfigurationError(f"K={self.K} must not exceed N_q={self.N_q}")
        if self.N_q > self.n_visual_tokens:
            raise ConfigurationError(f"N_q={self.N_q} exceeds visual tokens per frame ({self.n_visual_tokens})")
        if self.n_patterns < 2:
            raise ConfigurationError("need at least two patterns (target + distractor)")
        for dim in self.stage_dims:
            if dim % self.adapter_ratio:
                raise ConfigurationError(f"adapter_ratio {self.adapter_ratio} does not divide stage dim {dim}")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ConfigurationError("Adam betas must lie in [0, 1)")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = dataclasses.asdict(v) if dataclasses.is_dataclass(v) else v
        return out

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValidationError(f"unknown config fields: {', '.join(unknown)}")
        raw = dict(raw)
        if "loss_weights" in raw and not isinstance(raw["loss_weights"], LossWeights):
            try:
                raw["loss_weights"] = LossWeights(**raw["loss_weights"])
            except TypeError as e:
                raise ValidationError(f"bad loss_weights: {e}") from e
        return cls(**raw)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def load_config(path: Union[str, Path, None]) -> TrainConfig:
    if path is None:
        return TrainConfig()
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return TrainConfig.from_dict(raw)


def describe_defaults() -> str:
    cfg = TrainConfig()
    return "\n".join(f"  {k} = {v}" for k, v in cfg.to_dict().items())
