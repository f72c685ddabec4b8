"""Single-document run configuration (JSON) with strict key checking."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .baselines import GeoMlpConfig
from .contrastive import TrainConfig
from .corpus import DigestLimits
from .encoders import ModelConfig
from .errors import ConfigError
from .geo_pretrain import GeoPretrainConfig
from .text import FeatureConfig

CONFIG_VERSION = 1


@dataclass(frozen=True)
class EvalConfig:
    local_ns: tuple[int, ...] = (3, 5, 30)
    global_ns: tuple[int, ...] = (5, 30, 100)
    filter_type: bool = False


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    digest: DigestLimits = field(default_factory=DigestLimits)
    geo_pretrain: GeoPretrainConfig = field(default_factory=GeoPretrainConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    baseline: GeoMlpConfig = field(default_factory=GeoMlpConfig)
    threads: int = 1

    def to_dict(self) -> dict:
        d = {"version": CONFIG_VERSION, "seed": self.seed, "threads": self.threads,
             "model": self.model.to_dict()}
        for name in ("digest", "geo_pretrain", "train", "eval", "baseline"):
            d[name] = _plain(dataclasses.asdict(getattr(self, name)))
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in raw:
            continue
        v = raw[f.name]
        if isinstance(v, list):
            v = tuple(v)
        kwargs[f.name] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    version = raw.pop("version", None)
    if version != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}, got {version!r}")
    allowed = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    kwargs = {}
    if "model" in raw:
        m = dict(raw["model"])
        feats = m.pop("features", None)
        model = _build(ModelConfig, m, "model")
        if feats is not None:
            model = dataclasses.replace(model, features=_build(FeatureConfig, feats, "model.features"))
        kwargs["model"] = model
    if "digest" in raw:
        d = dict(raw["digest"])
        feats = d.pop("feature_config", None)
        digest = _build(DigestLimits, d, "digest")
        if feats is not None:
            digest = dataclasses.replace(digest, feature_config=_build(FeatureConfig, feats,
                                                                       "digest.feature_config"))
        kwargs["digest"] = digest
    if "train" in raw:
        t = dict(raw["train"])
        for mix in ("phase1_mix", "phase2_mix"):
            if mix in t and not isinstance(t[mix], dict):
                raise ConfigError(f"train.{mix} must be an object")
        kwargs["train"] = _build(TrainConfig, t, "train")
    for name, cls in (("geo_pretrain", GeoPretrainConfig), ("eval", EvalConfig),
                      ("baseline", GeoMlpConfig)):
        if name in raw:
            kwargs[name] = _build(cls, raw[name], name)
    for name in ("seed", "threads"):
        if name in raw:
            if not isinstance(raw[name], int) or isinstance(raw[name], bool):
                raise ConfigError(f"{name} must be an integer")
            kwargs[name] = raw[name]
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(raw)
