"""JSON run configuration.

Every section is optional and defaults to the full-band settings (510-point
FFT, hop 320, gamma 1.5, sigma in [0.05, 0.5], t in [0.03, 1], alpha 0.5,
beta 0.15, 30 PC steps with one corrector at r = 0.5, batch 8, lr 1e-4).
``"preset": "toy"`` switches to the 8 kHz desk-scale geometry and training
settings.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from scoredec.degrade import DegradeConfig
from scoredec.sampler import PcSamplerConfig
from scoredec.score_model import TrainConfig
from scoredec.sde import OuveParams
from scoredec.spectral import CompandingConfig, StftConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    band_size: int = 1
    context: int = 2
    hidden: tuple[int, ...] = (32,)
    n_emb: int = 3
    seed: int = 0


PRESETS = {
    "fullband": {
        "stft": {"fft_size": 510, "hop_size": 320},
        "train": {"segment_frames": 256},
        # 256 bins in bands of 4 keeps the network under 1e5 parameters
        "model": {"band_size": 4},
    },
    "toy": {
        "stft": {"fft_size": 126, "hop_size": 64},
        "train": {"segment_frames": 16, "learning_rate": 3e-3, "epochs": 30},
    },
}


@dataclass(frozen=True)
class RunConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    companding: CompandingConfig = field(default_factory=CompandingConfig)
    sde: OuveParams = field(default_factory=OuveParams)
    sampler: PcSamplerConfig = field(default_factory=PcSamplerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    degrade: DegradeConfig = field(default_factory=DegradeConfig)
    preset: str = "fullband"

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(
            self,
            sampler=dataclasses.replace(self.sampler, seed=seed),
            train=dataclasses.replace(self.train, seed=seed),
            degrade=dataclasses.replace(self.degrade, seed=seed),
        )

    def to_dict(self) -> dict:
        out = {"preset": self.preset}
        for name in SECTIONS:
            out[name] = dataclasses.asdict(getattr(self, name))
        return out


SECTIONS = {
    "stft": StftConfig,
    "companding": CompandingConfig,
    "sde": OuveParams,
    "sampler": PcSamplerConfig,
    "train": TrainConfig,
    "model": ModelConfig,
    "degrade": DegradeConfig,
}


def _build(section: str, cls, values: dict):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {', '.join(unknown)}")
    kwargs = dict(values)
    for f in dataclasses.fields(cls):
        if f.name in kwargs and isinstance(kwargs[f.name], list):
            kwargs[f.name] = tuple(kwargs[f.name])
    try:
        obj = cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc
    if isinstance(obj, ModelConfig):
        if obj.band_size < 1 or obj.context < 0 or obj.n_emb < 0 or not obj.hidden or min(obj.hidden) < 1:
            raise ConfigError("[model] band_size >= 1, context >= 0, n_emb >= 0 and positive hidden widths required")
    return obj


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - set(SECTIONS) - {"preset"})
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
    preset = doc.get("preset", "fullband")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    built = {}
    for name, cls in SECTIONS.items():
        section = doc.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be an object")
        merged = {**PRESETS[preset].get(name, {}), **section}
        built[name] = _build(name, cls, merged)
    return RunConfig(preset=preset, **built)


def load_config(path) -> RunConfig:
    if path is None:
        return parse_config({})
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc)
