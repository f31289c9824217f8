"""Glue between a RunConfig and the modules: data loading and model files."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .corpus import (
    DescriptionCorpus, DescriptionMemory, HashedBagOfWords, PrecomputedEmbeddings, embed_corpus, load_corpus,
    save_corpus,
)
from .dataworld import (
    ProcedureSet, SyntheticWorld, Video, export_features, extract_procedures, generate_world, ingest_features,
    split_train_test,
)
from .engine import load_checkpoint, save_checkpoint
from .inference import TransitionModel
from .planner import ModelConfig, PlannerModel


@dataclass
class Dataset:
    videos: list[Video]
    corpus: DescriptionCorpus
    memory: DescriptionMemory
    num_tasks: int
    world: SyntheticWorld | None = None

    def split(self, ratio: float, seed: int) -> tuple[list[Video], list[Video]]:
        return split_train_test(self.videos, ratio, seed)

    def procedures(self, T: int, ratio: float, seed: int) -> tuple[ProcedureSet, ProcedureSet]:
        train, test = self.split(ratio, seed)
        return extract_procedures(train, T), extract_procedures(test, T)


def write_world(world: SyntheticWorld, out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "manifest": export_features(world.videos, out_dir / "features.json"),
        "corpus": save_corpus(world.corpus, out_dir / "corpus.json"),
        "text_features": out_dir / "text_features.json",
        "graph": out_dir / "task_graph.json",
    }
    world.text_features.save(paths["text_features"])
    graph = {
        "tasks": world.task_names,
        "steps": world.step_names,
        "class_task": world.class_task.tolist(),
        "chains": [[list(c) for c in chains] for chains in world.chains],
    }
    paths["graph"].write_text(json.dumps(graph, indent=1, sort_keys=True) + "\n")
    return paths


def load_dataset(cfg: RunConfig) -> Dataset:
    """Ingest the configured manifest, or generate the configured synthetic world."""
    d = cfg.data
    if d.manifest is None:
        world = generate_world(cfg.world_spec())
        corpus = load_corpus(d.corpus) if d.corpus else world.corpus
        text = PrecomputedEmbeddings.load(d.text_features) if d.text_features else world.text_features
        return Dataset(world.videos, corpus, embed_corpus(corpus, text), world.num_tasks, world)
    if d.corpus is None:
        raise ConfigError("data.corpus: required when data.manifest is set")
    for key in ("manifest", "corpus", "text_features"):
        p = getattr(d, key)
        if p is not None and not Path(p).exists():
            raise FileNotFoundError(f"data.{key}: {p} does not exist")
    videos = ingest_features(d.manifest)
    corpus = load_corpus(d.corpus)
    text = PrecomputedEmbeddings.load(d.text_features) if d.text_features else HashedBagOfWords(64, cfg.seed)
    num_tasks = max(v.task_id for v in videos) + 1 if videos else 0
    return Dataset(videos, corpus, embed_corpus(corpus, text), num_tasks)


def build_model(cfg: ModelConfig, data: Dataset, visual_dim: int) -> PlannerModel:
    return PlannerModel(cfg, visual_dim, data.memory.feature_dim, data.memory.C, data.memory.K, data.num_tasks)


def save_model(path: str | Path, model: PlannerModel, visual_dim: int, text_dim: int, meta: dict) -> None:
    full = dict(meta, model=model.cfg.model_dump(mode="json"), visual_dim=visual_dim, text_dim=text_dim,
                C=model.C, K=model.K, num_tasks=model.num_tasks)
    save_checkpoint(path, model.state_dict(), full)


def load_model(path: str | Path) -> tuple[PlannerModel, dict]:
    if not Path(path).exists():
        raise FileNotFoundError(f"checkpoint {path} does not exist; run train first")
    params, meta = load_checkpoint(path)
    model = PlannerModel(ModelConfig(**meta["model"]), meta["visual_dim"], meta["text_dim"], meta["C"], meta["K"],
                         meta["num_tasks"])
    model.load_state_dict(params)
    return model.eval(), meta


def save_transition(path: str | Path, tm: TransitionModel) -> None:
    Path(path).write_text(json.dumps(tm.to_dict()) + "\n")


def load_transition(path: str | Path) -> TransitionModel:
    if not Path(path).exists():
        raise FileNotFoundError(f"transition file {path} does not exist; run train first")
    return TransitionModel.from_dict(json.loads(Path(path).read_text()))


def horizon_dir(cfg: RunConfig, T: int) -> Path:
    return Path(cfg.out_dir) / f"T{T}"


def sample_ids(samples: ProcedureSet) -> list[str]:
    return [f"{i:05d}:{v}" for i, v in enumerate(samples.video_ids)]


def as_int_list(a) -> list[int]:
    return [int(x) for x in np.asarray(a).ravel()]
