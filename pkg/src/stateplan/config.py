"""Run configuration: one YAML (or JSON) file, validated before anything runs."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Literal, Sequence

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .dataworld import WorldSpec
from .planner import ModelConfig
from .training import LossWeights, TrainConfig


class ConfigError(ValueError):
    """Invalid configuration; the message leads with the offending field path."""


class DataConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    # with ``manifest`` set, observation features are ingested instead of generated
    manifest: str | None = None
    corpus: str | None = None
    text_features: str | None = None
    world: WorldSpec = WorldSpec()
    split_ratio: float = Field(0.7, gt=0, lt=1)
    horizons: list[int] = Field(default_factory=lambda: [3])


class InferenceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    mode: Literal["argmax", "viterbi", "prob"] = "viterbi"
    smoothing: float = Field(1e-6, gt=0)
    num_samples: int = Field(1500, gt=0)
    sample_decode: Literal["argmax", "viterbi"] = "viterbi"
    noise_scale: float | None = Field(None, ge=0)


class LlmConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    endpoint: str | None = None
    model: str = "gpt-3.5-turbo"
    timeout: float = Field(60.0, gt=0)
    max_retries: int = Field(2, ge=0)
    max_concurrency: int = Field(4, gt=0)
    params: dict = Field(default_factory=lambda: {"temperature": 0.0})


class AblationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    arms: list[str] = Field(default_factory=lambda: ["a", "b", "c", "d"])
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])


class RunConfig(BaseModel):
    """Everything a command needs. The top-level ``seed`` drives world, model and batch order."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = 0
    out_dir: str = "runs/default"
    data: DataConfig = DataConfig()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    loss: LossWeights = LossWeights()
    inference: InferenceConfig = InferenceConfig()
    llm: LlmConfig = LlmConfig()
    ablation: AblationConfig = AblationConfig()

    def world_spec(self) -> WorldSpec:
        return self.data.world.model_copy(update={"seed": self.seed})

    def model_cfg(self) -> ModelConfig:
        return self.model.model_copy(update={"seed": self.seed})

    def train_cfg(self) -> TrainConfig:
        return self.train.model_copy(update={"seed": self.seed})

    def canonical(self) -> dict:
        doc = self.model_dump(mode="json")
        doc.pop("out_dir")
        return doc

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _field_path(err: dict) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def _format_validation(exc: ValidationError) -> str:
    first = exc.errors()[0]
    msg = f"{_field_path(first)}: {first['msg']}"
    if len(exc.errors()) > 1:
        msg += f" (and {len(exc.errors()) - 1} more)"
    return msg


def parse_value(text: str):
    """Numbers, booleans, null, lists via JSON, then YAML; otherwise the raw string."""
    try:
        return json.loads(text)
    except ValueError:
        pass
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def _section_fields() -> dict[str, set[str]]:
    out = {}
    for name, f in RunConfig.model_fields.items():
        ann = f.annotation
        if isinstance(ann, type) and issubclass(ann, BaseModel):
            out[name] = set(ann.model_fields)
    return out


def resolve_key(key: str) -> list[str]:
    """Dotted path for an override key; a bare key resolves to the unique section that has it."""
    if "." in key or key in RunConfig.model_fields:
        return key.split(".")
    owners = [sec for sec, fields in _section_fields().items() if key in fields]
    if len(owners) == 1:
        return [owners[0], key]
    if not owners:
        raise ConfigError(f"{key}: unknown configuration key")
    raise ConfigError(f"{key}: ambiguous key, found in sections {sorted(owners)}; use a dotted path")


def apply_overrides(doc: dict, overrides: Sequence[str]) -> dict:
    doc = json.loads(json.dumps(doc))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"{item}: override must look like key=value")
        key, value = item.split("=", 1)
        path = resolve_key(key.strip())
        node = doc
        for part in path[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"{'.'.join(path)}: {part} is not a section")
            node = nxt
        node[path[-1]] = parse_value(value.strip())
    return doc


def read_config_file(path: str | os.PathLike) -> dict:
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"<file>: cannot parse {path}: {exc}".replace("\n", " ")) from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"<root>: expected a mapping at the top of {path}")
    return doc


def load_config(path: str | os.PathLike | None = None, overrides: Sequence[str] = ()) -> RunConfig:
    """Read, apply ``key=value`` overrides and validate. Missing files raise FileNotFoundError."""
    doc = read_config_file(path) if path is not None else {}
    doc = apply_overrides(doc, overrides)
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None
