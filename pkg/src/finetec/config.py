"""Run configuration: one JSON document, one section per pipeline stage."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .complete import CompletionConfig
from .corrupt import CORRUPTION_MODES, SEVERITY_RATES
from .decompose import AugmentSpec
from .dynamics import DynamicsConfig
from .recognize import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    num_classes: int = 4
    per_class: int = 50
    T: int = 16
    noise: float = 0.01
    seed: int = 0


@dataclass
class CorruptionConfig:
    rate: float = 0.5
    mode: str = "random"
    seed: int = 7
    eval_severities: tuple = ("minor", "moderate", "severe")

    def __post_init__(self):
        if self.mode not in CORRUPTION_MODES:
            raise ConfigError(f"corruption.mode: unknown mode {self.mode!r}")
        bad = [s for s in self.eval_severities if s not in SEVERITY_RATES]
        if bad:
            raise ConfigError(f"corruption.eval_severities: unknown {bad}")


@dataclass
class DecompositionConfig:
    seed: int = 3
    p_strong: float = 0.5
    weak_crop_p: float = 1.0
    weak_flip_p: float = 0.5
    strong_crop: tuple = (0.6, 1.0)
    weak_crop: tuple = (0.9, 1.0)
    frame_drop_p: float = 0.1
    noise_scale: float = 0.02
    axis_mask_p: float = 0.2
    bone_scale: tuple = (0.9, 1.1)
    dropout_p: float = 0.05
    time_warp: tuple = (0.8, 1.25)

    def specs(self) -> tuple[AugmentSpec, AugmentSpec]:
        params = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "seed"}
        return AugmentSpec("strong", self.seed, **params), AugmentSpec("weak", self.seed, **params)


@dataclass
class RecognitionConfig:
    channels: tuple = (4, 32, 64)
    temporal_kernel: int = 3
    seed: int = 0


SECTIONS = {
    "synth": SynthConfig,
    "corruption": CorruptionConfig,
    "completion": CompletionConfig,
    "decomposition": DecompositionConfig,
    "dynamics": DynamicsConfig,
    "recognition": RecognitionConfig,
    "training": TrainConfig,
}


def _build(cls, name: str, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"section {name!r}: unknown keys {unknown}")
    kwargs = {}
    for key, value in data.items():
        default = fields[key].default
        if isinstance(default, tuple) and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {name!r}: {exc}") from None


@dataclass
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    corruption: CorruptionConfig = field(default_factory=CorruptionConfig)
    completion: CompletionConfig = field(default_factory=CompletionConfig)
    decomposition: DecompositionConfig = field(default_factory=DecompositionConfig)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    recognition: RecognitionConfig = field(default_factory=RecognitionConfig)
    training: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(data) - set(SECTIONS))
        if unknown:
            raise ConfigError(f"unknown config sections {unknown}")
        return cls(**{name: _build(SECTIONS[name], name, data.get(name, {})) for name in SECTIONS})

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def with_seed(self, seed: int) -> "RunConfig":
        """Copy with every section's seed replaced by ``seed``."""
        data = self.to_dict()
        for section in data.values():
            if "seed" in section:
                section["seed"] = seed
        return RunConfig.from_dict(data)
