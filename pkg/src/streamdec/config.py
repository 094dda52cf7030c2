"""Run configuration: flat key-value text file with one section per config
type. Every default equals the time-mask column of the training recipe, so a
run with no overrides is the reference setting."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, asdict

from .augment import AugmentConfig
from .beam import DecodeConfig
from .model import ModelConfig
from .synth import SynthConfig
from .train import TrainConfig

__all__ = ["RunConfig", "load_run_config", "save_run_config"]


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    adapt_n_augment: int = 64
    adapt_learning_rate: float = 1e-3
    adapt_trainable_group: str = "embedding"
    seed: int = 0


_SECTIONS = {
    "model": ModelConfig,
    "augment": AugmentConfig,
    "train": TrainConfig,
    "decode": DecodeConfig,
    "synth": SynthConfig,
}

# fields that do not fit flat key=value text
_SKIP = {("synth", "corpus"), ("augment", "channel_mask")}


def _coerce(default_type, raw):
    if raw == "none":
        return None
    if default_type is bool:
        return raw.lower() in ("1", "true", "yes")
    if default_type is int:
        return int(raw)
    if default_type is float:
        return float(raw)
    return raw


def load_run_config(path):
    cp = configparser.ConfigParser()
    with open(path, encoding="utf-8") as f:
        cp.read_file(f)
    run = RunConfig()
    for section, cls in _SECTIONS.items():
        if not cp.has_section(section):
            continue
        kwargs = {}
        ftypes = {f.name: f for f in fields(cls)}
        for key, raw in cp.items(section):
            if key not in ftypes or (section, key) in _SKIP:
                raise ValueError(f"config: unknown key [{section}] {key}")
            default = getattr(getattr(run, section), key)
            typ = type(default) if default is not None else \
                (int if key == "max_rel_dist" else str)
            kwargs[key] = _coerce(typ, raw)
        setattr(run, section, cls(**{**asdict(getattr(run, section)), **kwargs}))
    if cp.has_section("adapt"):
        for key, raw in cp.items("adapt"):
            attr = f"adapt_{key}"
            if not hasattr(run, attr):
                raise ValueError(f"config: unknown key [adapt] {key}")
            run.__setattr__(attr, _coerce(type(getattr(run, attr)), raw))
    if cp.has_section("run") and cp.has_option("run", "seed"):
        run.seed = cp.getint("run", "seed")
    return run


def save_run_config(run, path):
    cp = configparser.ConfigParser()
    cp["run"] = {"seed": str(run.seed)}
    for section in _SECTIONS:
        obj = getattr(run, section)
        cp[section] = {}
        for k, v in asdict(obj).items():
            if (section, k) in _SKIP:
                continue
            cp[section][k] = "none" if v is None else str(v)
    cp["adapt"] = {
        "n_augment": str(run.adapt_n_augment),
        "learning_rate": str(run.adapt_learning_rate),
        "trainable_group": run.adapt_trainable_group,
    }
    with open(path, "w", encoding="utf-8") as f:
        cp.write(f)
