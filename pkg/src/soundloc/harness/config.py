"""Experiment configuration and its JSON file format."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..acoustics import RoomSpec
from ..errors import ConfigError
from ..model.config import ModelConfig
from ..multilat import SolverConfig

FORMAT_VERSION = 1
OUTPUT_ENV = "SOUNDLOC_OUTPUT_DIR"
SCENARIOS = ("default", "unknown_source_signal", "faulty_mic_scene_A", "faulty_mic_scene_B", "multi_source")
METHODS = ("neural", "multilat", "multilat_robust")

# desk-scale network; the full-size defaults live in ModelConfig
DESK_MODEL = {"embed_dim": 32, "num_heads": 2, "num_blocks": 2, "position_mask_ratio": 0.3}


def default_output() -> str:
    return os.environ.get(OUTPUT_ENV, "results")


@dataclass
class ExperimentConfig:
    """One experiment: scenario, scene counts, dataset sizes, methods and seeds.

    Scenes are drawn with ``mic_pool`` microphones and truncated to the first
    ``M``, so runs that differ only in ``M`` share source positions.
    """

    scenario: str = "default"
    M: int = 11
    K: int = 1
    U: int = 0
    n_train: int = 512
    n_val: int = 64
    n_test: int = 128
    n_samples: int = 2048
    noise_std: float = 0.001
    mic_pool: int = 11
    epochs: int = 100
    batch_size: int = 32
    data_seed: int = 0
    train_seed: int = 0
    eval_seed: int = 0
    methods: list = field(default_factory=lambda: list(METHODS))
    model: dict = field(default_factory=lambda: dict(DESK_MODEL))
    solver: dict = field(default_factory=dict)
    room: dict = field(default_factory=lambda: RoomSpec().to_dict())
    output: str = field(default_factory=default_output)
    dataset: str = ""        # directory with train/val/test .slds files; empty = generate
    checkpoint: str = ""     # trained parameters to evaluate; empty = train
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.format_version != FORMAT_VERSION:
            raise ConfigError(f"config format_version {self.format_version} is not {FORMAT_VERSION}")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        self.methods = list(self.methods)
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"methods must be a nonempty subset of {METHODS}, got {self.methods}")
        if self.M < 1 or self.K < 1 or not 0 <= self.U <= self.M:
            raise ConfigError(f"need M >= 1, K >= 1 and 0 <= U <= M (M={self.M}, K={self.K}, U={self.U})")
        if self.scenario.startswith("faulty_mic") and self.U < 1:
            raise ConfigError(f"{self.scenario} needs at least one faulty microphone (U >= 1)")
        if self.scenario == "multi_source" and self.K < 2:
            raise ConfigError("multi_source needs K >= 2")
        if not self.scenario.startswith("faulty_mic") and self.U:
            raise ConfigError(f"scenario {self.scenario} has no faulty microphones; set U = 0")
        if min(self.n_train, self.n_val, self.n_test) < 0:
            raise ConfigError("dataset sizes must be non-negative")
        if self.mic_pool < self.M:
            self.mic_pool = self.M
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")
        try:
            self.room_spec
            self.model_config
            self.solver_config
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def room_spec(self) -> RoomSpec:
        return RoomSpec.from_dict(self.room)

    @property
    def source_known(self) -> bool:
        return self.scenario == "faulty_mic_scene_B"

    @property
    def model_config(self) -> ModelConfig:
        fixed = {"n_mics": self.M, "num_sources": self.K, "n_samples": self.n_samples,
                 "source_known": self.source_known, "room": self.room_spec}
        clash = set(fixed) & set(self.model)
        if clash:
            raise ConfigError(f"model keys {sorted(clash)} are derived from the experiment")
        return ModelConfig.from_dict({**self.model, **fixed})

    @property
    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def updated(self, **overrides) -> "ExperimentConfig":
        return replace(self, **overrides)


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return ExperimentConfig.from_dict(data)


def save_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
