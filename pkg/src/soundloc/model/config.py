from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

from ..acoustics import RoomSpec
from ..errors import ConfigError


@dataclass
class ModelConfig:
    """Architecture, loss weights and feature settings of the localizer.

    ``n_mics``, ``n_samples`` and ``tau_max`` fix the token budget and input
    widths; a trained model only accepts recordings that match them.
    """

    embed_dim: int = 128
    num_heads: int = 4
    num_blocks: int = 4
    num_decoder_blocks: int = 1
    top_t: int = 4
    mask_ratio: float = 0.3
    position_mask_ratio: float = 0.0
    lambda_sound: float = 1.0
    lambda_mloc: float = 1.0
    lambda_sloc: float = 1.0
    num_sources: int = 1
    filterbank_size: int = 8
    alpha: float = 1.0
    ascm_reduction: str = "sum"
    mlp_hidden: int | None = None
    ffn_mult: int = 2
    n_mics: int = 11
    n_samples: int = 2048
    tau_max: int | None = None
    source_known: bool = False
    welch_segment: int = 256
    audio_frame: int = 256
    audio_hop: int = 128
    room: RoomSpec = field(default_factory=RoomSpec)
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.room, dict):
            self.room = RoomSpec.from_dict(self.room)
        if self.embed_dim % self.num_heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if self.top_t < 1:
            raise ConfigError("top_t must be >= 1")
        if not 0.0 <= self.mask_ratio < 1.0:
            raise ConfigError("mask_ratio must lie in [0, 1)")
        if not 0.0 <= self.position_mask_ratio < 1.0:
            raise ConfigError("position_mask_ratio must lie in [0, 1)")
        if min(self.lambda_sound, self.lambda_mloc, self.lambda_sloc) < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.num_blocks < 0 or self.num_decoder_blocks < 0:
            raise ConfigError("block counts must be non-negative")
        if self.num_sources < 1 or self.n_mics < 1 or self.filterbank_size < 1:
            raise ConfigError("num_sources, n_mics and filterbank_size must be >= 1")
        if self.ascm_reduction not in ("sum", "mean"):
            raise ConfigError("ascm_reduction must be 'sum' or 'mean'")
        if self.alpha < 0:
            raise ConfigError("alpha must be non-negative")

    @property
    def hidden(self) -> int:
        return self.mlp_hidden or self.embed_dim

    @property
    def lag_count(self) -> int:
        return 2 * self.resolved_tau_max + 1

    @property
    def resolved_tau_max(self) -> int:
        if self.tau_max is not None:
            return int(self.tau_max)
        r = self.room
        return int(math.ceil(r.diagonal / r.speed_of_sound * r.sample_rate))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["room"] = self.room.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)
