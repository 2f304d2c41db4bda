"""Experiment configuration: JSON document with defaults and strict keys."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .diffusion import TrainConfig
from .model import ModelConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    seed: int = 0
    count: int = 16
    holdout: int = 0
    grid_h: int = 32
    grid_w: int = 32
    n_instances: int = 120
    n_nets: int = 90
    target_max_drop: float = 0.3  # fraction of vdd after power rescaling
    vdd: float = 1.0
    r0: float = 1.0
    pad_every: int = 8
    pad_gain: float = 100.0


@dataclass
class FeatureConfig:
    alpha: tuple[float, float, float, float] = (0.1, 0.1, 0.1, 0.1)
    beta: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    egr_capacity: float = 0.6
    gr_capacity: float = 0.8


@dataclass
class GraphConfig:
    n_tokens: int = 32
    pool_mode: str = "topk"
    fanout_cap: int = 64
    use_graph: bool = True


@dataclass
class DiffusionConfig:
    T: int = 64
    kind: str = "cosine"


@dataclass
class EvalConfig:
    metrics: tuple[str, ...] = ("mae", "rmse", "nmae", "psnr_db", "ssim", "pearson", "spearman")


@dataclass
class IoConfig:
    out_dir: str = "runs"


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    io: IoConfig = field(default_factory=IoConfig)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True, default=list)


_SECTIONS = {
    "data": DataConfig,
    "features": FeatureConfig,
    "graph": GraphConfig,
    "model": ModelConfig,
    "diffusion": DiffusionConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
    "io": IoConfig,
}


def _build_section(cls, doc: dict, section: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(doc) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    kwargs = {}
    for key, val in doc.items():
        # JSON lists for tuple-typed fields
        if isinstance(val, list):
            val = tuple(val)
        kwargs[key] = val
    return cls(**kwargs)


def config_from_dict(doc: dict) -> ExperimentConfig:
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = doc.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"section [{name}] must be an object")
        kwargs[name] = _build_section(cls, section, name)
    cfg = ExperimentConfig(**kwargs)
    try:
        cfg.train.validate()
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}") from e
    return config_from_dict(doc)
