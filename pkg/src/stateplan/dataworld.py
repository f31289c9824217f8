"""Synthetic procedural worlds, procedure extraction, splits and feature ingestion.

A synthetic world has step classes with latent before/after state vectors.
Tasks are step chains; consecutive steps in any chain share the state between
them exactly (after-vector of one step is the before-vector of the next).
Observations are latent vectors plus Gaussian noise, and every state
description's text feature is a noisy copy of the latent it describes.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .corpus import DescriptionCorpus, PrecomputedEmbeddings, canonical_texts, describe_steps


class WorldSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    num_tasks: int = Field(6, gt=0)
    steps_per_task: int = Field(4, gt=0)
    feature_dim: int = Field(32, gt=0)
    observation_noise_sigma: float = Field(0.1, ge=0)
    videos_per_task: int = Field(20, gt=0)
    branching: float = Field(0.0, ge=0, le=1)
    # "swap" reorders two adjacent steps; "substitute" replaces one interior step with an extra class
    branch_kind: Literal["swap", "substitute"] = "swap"
    alternate_share: float = Field(0.5, ge=0, le=1)
    description_noise_sigma: float = Field(0.1, ge=0)
    K: int = Field(3, gt=0)
    seed: int = 0


@dataclass
class Video:
    video_id: str
    task_id: int
    steps: np.ndarray
    start_features: np.ndarray
    end_features: np.ndarray
    start_states: np.ndarray | None = None
    end_states: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.steps)


@dataclass
class SyntheticWorld:
    spec: WorldSpec
    task_names: list[str]
    step_names: list[str]
    verbs: list[str]
    class_task: np.ndarray
    chains: list[list[tuple[int, ...]]]
    before_latent: np.ndarray
    after_latent: np.ndarray
    before_state: np.ndarray
    after_state: np.ndarray
    corpus: DescriptionCorpus
    text_features: PrecomputedEmbeddings
    videos: list[Video]

    @property
    def C(self) -> int:
        return len(self.step_names)

    @property
    def num_tasks(self) -> int:
        return len(self.task_names)

    def all_chains(self) -> Iterator[tuple[int, tuple[int, ...]]]:
        for t, chains in enumerate(self.chains):
            for chain in chains:
                yield t, chain

    def is_valid_plan(self, steps: Sequence[int]) -> bool:
        """True if ``steps`` is a contiguous window of some task chain."""
        steps = tuple(int(s) for s in steps)
        n = len(steps)
        for _, chain in self.all_chains():
            for i in range(len(chain) - n + 1):
                if chain[i:i + n] == steps:
                    return True
        return False


@dataclass
class ProcedureSet:
    """Fixed-horizon procedures stored column-wise."""

    s0: np.ndarray
    sT: np.ndarray
    steps: np.ndarray
    task: np.ndarray
    video_ids: np.ndarray
    start_state: np.ndarray
    goal_state: np.ndarray

    def __len__(self) -> int:
        return len(self.task)

    @property
    def T(self) -> int:
        return self.steps.shape[1]

    def subset(self, idx) -> "ProcedureSet":
        idx = np.asarray(idx)
        return ProcedureSet(*(getattr(self, f)[idx] for f in _PS_FIELDS))

    def __getitem__(self, i: int) -> "ProcedureSample":
        return ProcedureSample(
            s0=self.s0[i], sT=self.sT[i], steps=self.steps[i], task_id=int(self.task[i]),
            video_id=str(self.video_ids[i]), T=self.T,
        )

    def contexts(self) -> list[tuple]:
        """Grouping key per sample: latent (task, start, goal) when known, else the sample itself."""
        out = []
        for i in range(len(self)):
            if self.start_state[i] >= 0 and self.goal_state[i] >= 0:
                out.append((int(self.task[i]), int(self.start_state[i]), int(self.goal_state[i])))
            else:
                out.append(("sample", i))
        return out


_PS_FIELDS = ("s0", "sT", "steps", "task", "video_ids", "start_state", "goal_state")


@dataclass(frozen=True)
class ProcedureSample:
    s0: np.ndarray
    sT: np.ndarray
    steps: np.ndarray
    task_id: int
    video_id: str
    T: int


# -- world generation --------------------------------------------------------

_GOALS = (
    "Make Lemonade", "Grill Steak", "Build Shelf", "Change Tire", "Plant Tree", "Brew Coffee",
    "Wash Car", "Bake Bread", "Paint Fence", "Make Pancakes", "Repair Bike", "Pack Suitcase",
)
_VERBS = (
    "add", "pour", "cut", "mix", "heat", "place", "remove", "attach", "fold", "press",
    "rinse", "stir", "tighten", "spread", "lift", "cover",
)
_ADJ = ("red", "small", "wooden", "metal", "green", "large", "round", "glass", "blue", "flat", "old", "soft")
_NOUN = (
    "bowl", "board", "bolt", "lemon", "wheel", "pan", "brush", "lid", "cup", "sheet", "jar",
    "plank", "bag", "rope", "filter", "tray", "panel", "hose", "box", "towel",
)


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _names(spec: WorldSpec, rng: np.random.Generator, C: int) -> tuple[list[str], list[str], list[str]]:
    tasks = [
        _GOALS[t % len(_GOALS)] + ("" if t < len(_GOALS) else f" {t // len(_GOALS) + 1}")
        for t in range(spec.num_tasks)
    ]
    objects = [f"{a} {n}" for a in _ADJ for n in _NOUN]
    order = rng.permutation(len(objects))
    verbs, steps = [], []
    for c in range(C):
        obj = objects[order[c % len(objects)]]
        if c >= len(objects):
            obj = f"{obj} {c // len(objects) + 1}"
        verb = _VERBS[int(rng.integers(len(_VERBS)))]
        verbs.append(verb)
        steps.append(f"{verb} {obj}")
    return tasks, steps, verbs


def _swap_chains(spec: WorldSpec, rng: np.random.Generator) -> list[list[tuple[int, ...]]]:
    S = spec.steps_per_task
    chains = []
    for t in range(spec.num_tasks):
        primary = tuple(range(t * S, (t + 1) * S))
        options = [primary]
        if S >= 2 and rng.random() < spec.branching:
            lo, hi = (1, S - 3) if S >= 4 else (0, S - 2)
            i = int(rng.integers(lo, hi + 1))
            alt = list(primary)
            alt[i], alt[i + 1] = alt[i + 1], alt[i]
            options.append(tuple(alt))
        chains.append(options)
    return chains


def _substitute_chains(spec: WorldSpec, rng: np.random.Generator) -> list[list[tuple[int, ...]]]:
    """Alternative classes get ids after the primary ones, in task order."""
    S = spec.steps_per_task
    next_id = spec.num_tasks * S
    chains = []
    for t in range(spec.num_tasks):
        primary = tuple(range(t * S, (t + 1) * S))
        options = [primary]
        if S >= 3 and rng.random() < spec.branching:
            i = int(rng.integers(1, S - 1))
            alt = list(primary)
            alt[i] = next_id
            next_id += 1
            options.append(tuple(alt))
        chains.append(options)
    return chains


def generate_world(spec: WorldSpec) -> SyntheticWorld:
    """Deterministic in ``spec`` (including its seed)."""
    rng = np.random.default_rng(spec.seed)
    S, F = spec.steps_per_task, spec.feature_dim
    C = spec.num_tasks * S
    if spec.branch_kind == "swap":
        task_names, step_names, verbs = _names(spec, rng, C)
        class_task = np.repeat(np.arange(spec.num_tasks), S)
        chains = _swap_chains(spec, rng)
    else:
        chains = _substitute_chains(spec, np.random.default_rng([spec.seed, 17]))
        extra = [t for t, opts in enumerate(chains) if len(opts) > 1]
        C += len(extra)
        task_names, step_names, verbs = _names(spec, rng, C)
        class_task = np.concatenate([np.repeat(np.arange(spec.num_tasks), S), extra]).astype(np.int64)

    uf = _UnionFind()
    for c in range(C):
        uf.find(("b", c))
        uf.find(("a", c))
    for options in chains:
        for chain in options:
            for x, y in zip(chain, chain[1:]):
                uf.union(("a", x), ("b", y))
    roots = sorted({uf.find(("b", c)) for c in range(C)} | {uf.find(("a", c)) for c in range(C)})
    root_id = {r: i for i, r in enumerate(roots)}
    latents = rng.standard_normal((len(roots), F))
    latents /= np.linalg.norm(latents, axis=1, keepdims=True)
    before_state = np.array([root_id[uf.find(("b", c))] for c in range(C)])
    after_state = np.array([root_id[uf.find(("a", c))] for c in range(C)])
    before_latent = latents[before_state]
    after_latent = latents[after_state]

    corpus = describe_steps(
        [(c, task_names[class_task[c]], step_names[c]) for c in range(C)],
        K=spec.K, seed=spec.seed, verbs=dict(enumerate(verbs)),
    )
    table = {}
    sigma_d = spec.description_noise_sigma
    for side, lat in (("before", before_latent), ("after", after_latent)):
        for c, sds in corpus:
            for sentence in sds.sentences(side):
                if sentence in table:
                    raise ValueError(f"duplicate description text {sentence!r}")
                table[sentence] = lat[c] + sigma_d * rng.standard_normal(F)
    for c, sds in corpus:
        table[sds.step_description] = (after_latent[c] - before_latent[c]) + sigma_d * rng.standard_normal(F)

    sigma = spec.observation_noise_sigma
    videos = []
    for t, options in enumerate(chains):
        for v in range(spec.videos_per_task):
            use_alt = len(options) > 1 and rng.random() < spec.alternate_share
            chain = np.array(options[1] if use_alt else options[0])
            n = len(chain)
            start = before_latent[chain] + sigma * rng.standard_normal((n, F))
            end = after_latent[chain] + sigma * rng.standard_normal((n, F))
            videos.append(Video(
                video_id=f"t{t:03d}v{v:04d}", task_id=t, steps=chain,
                start_features=start.astype(np.float32), end_features=end.astype(np.float32),
                start_states=before_state[chain], end_states=after_state[chain],
            ))

    return SyntheticWorld(
        spec=spec, task_names=task_names, step_names=step_names, verbs=verbs, class_task=class_task,
        chains=chains, before_latent=before_latent.astype(np.float32),
        after_latent=after_latent.astype(np.float32), before_state=before_state, after_state=after_state,
        corpus=corpus, text_features=PrecomputedEmbeddings(table), videos=videos,
    )


# -- procedures --------------------------------------------------------------

def extract_procedures(videos: Sequence[Video] | SyntheticWorld, T: int) -> ProcedureSet:
    """One sample per length-``T`` sliding window of every video."""
    if isinstance(videos, SyntheticWorld):
        videos = videos.videos
    if T < 1:
        raise ValueError(f"horizon must be >= 1, got {T}")
    cols = {f: [] for f in _PS_FIELDS}
    dim = None
    for vid in videos:
        dim = vid.start_features.shape[1]
        for t in range(len(vid) - T + 1):
            cols["s0"].append(vid.start_features[t])
            cols["sT"].append(vid.end_features[t + T - 1])
            cols["steps"].append(vid.steps[t:t + T])
            cols["task"].append(vid.task_id)
            cols["video_ids"].append(vid.video_id)
            cols["start_state"].append(-1 if vid.start_states is None else vid.start_states[t])
            cols["goal_state"].append(-1 if vid.end_states is None else vid.end_states[t + T - 1])
    if not cols["task"]:
        dim = dim or 0
        return ProcedureSet(
            s0=np.zeros((0, dim), np.float32), sT=np.zeros((0, dim), np.float32),
            steps=np.zeros((0, T), np.int64), task=np.zeros(0, np.int64), video_ids=np.array([], dtype=str),
            start_state=np.zeros(0, np.int64), goal_state=np.zeros(0, np.int64),
        )
    return ProcedureSet(
        s0=np.stack(cols["s0"]).astype(np.float32),
        sT=np.stack(cols["sT"]).astype(np.float32),
        steps=np.stack(cols["steps"]).astype(np.int64),
        task=np.array(cols["task"], dtype=np.int64),
        video_ids=np.array(cols["video_ids"]),
        start_state=np.array(cols["start_state"], dtype=np.int64),
        goal_state=np.array(cols["goal_state"], dtype=np.int64),
    )


def split_video_ids(video_ids: Sequence[str], task_ids: Sequence[int], ratio: float = 0.7,
                    seed: int = 0) -> tuple[set[str], set[str]]:
    """Per-task random split of videos; ``round(ratio * n)`` of each task's videos train."""
    by_task: dict[int, list[str]] = {}
    for vid, t in zip(video_ids, task_ids):
        lst = by_task.setdefault(int(t), [])
        if vid not in lst:
            lst.append(vid)
    train, test = set(), set()
    rng = np.random.default_rng(seed)
    for t in sorted(by_task):
        vids = sorted(by_task[t])
        if len(vids) < 2:
            warnings.warn(f"task {t} has {len(vids)} video(s); all go to the training split", stacklevel=2)
            train.update(vids)
            continue
        perm = rng.permutation(len(vids))
        n_train = min(max(int(math.floor(ratio * len(vids) + 0.5)), 1), len(vids) - 1)
        train.update(vids[i] for i in perm[:n_train])
        test.update(vids[i] for i in perm[n_train:])
    return train, test


def split_train_test(samples: ProcedureSet | Sequence[Video], ratio: float = 0.7, seed: int = 0):
    """Split by video, stratified per task; every window of a video lands on one side."""
    if isinstance(samples, ProcedureSet):
        train_ids, _ = split_video_ids(samples.video_ids, samples.task, ratio, seed)
        mask = np.array([v in train_ids for v in samples.video_ids], dtype=bool)
        return samples.subset(np.flatnonzero(mask)), samples.subset(np.flatnonzero(~mask))
    videos = list(samples)
    train_ids, _ = split_video_ids([v.video_id for v in videos], [v.task_id for v in videos], ratio, seed)
    return [v for v in videos if v.video_id in train_ids], [v for v in videos if v.video_id not in train_ids]


def sample_batch(n: int | ProcedureSet, batch_size: int = 256, seed: int = 0, epoch: int = 0) -> list[np.ndarray]:
    """Shuffled index batches for one epoch; the last batch may be partial."""
    if not isinstance(n, int):
        n = len(n)
    if n <= 0:
        raise ValueError("sample_batch: empty dataset")
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


# -- feature manifests -------------------------------------------------------

class ManifestError(ValueError):
    pass


def export_features(videos: Sequence[Video], manifest_path: str | os.PathLike, dataset: str = "synthetic") -> Path:
    """Write videos as a JSON manifest plus a raw little-endian float32 blob."""
    manifest_path = Path(manifest_path)
    blob_path = manifest_path.with_suffix(".bin")
    dim = videos[0].start_features.shape[1] if videos else 0
    chunks, entries, offset = [], [], 0
    for vid in videos:
        steps = []
        for t in range(len(vid)):
            item = {"class_id": int(vid.steps[t])}
            for key, arr in (("start", vid.start_features[t]), ("end", vid.end_features[t])):
                buf = np.ascontiguousarray(arr, dtype="<f4").tobytes()
                item[key] = offset
                chunks.append(buf)
                offset += len(buf)
            if vid.start_states is not None:
                item["start_state"] = int(vid.start_states[t])
                item["end_state"] = int(vid.end_states[t])
            steps.append(item)
        entries.append({"video_id": vid.video_id, "task_id": int(vid.task_id), "steps": steps})
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    blob_path.write_bytes(b"".join(chunks))
    doc = {"dataset": dataset, "feature_dim": int(dim), "blob": blob_path.name, "entries": entries}
    manifest_path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return manifest_path


def ingest_features(manifest_path: str | os.PathLike, blob_path: str | os.PathLike | None = None,
                    feature_dim: int | None = None) -> list[Video]:
    """Load videos from a feature manifest; validates dims and every blob reference."""
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as err:
        raise ManifestError(f"{manifest_path}: line {err.lineno}: {err.msg}") from None
    for key in ("feature_dim", "entries"):
        if key not in doc:
            raise ManifestError(f"{manifest_path}: missing field '{key}'")
    dim = int(doc["feature_dim"])
    if feature_dim is not None and dim != feature_dim:
        raise ManifestError(f"feature_dim mismatch: expected {feature_dim}, manifest has {dim}")
    if blob_path is None:
        blob_path = manifest_path.parent / doc.get("blob", manifest_path.with_suffix(".bin").name)
    blob = Path(blob_path).read_bytes()
    nbytes = dim * 4
    videos = []
    for entry in doc["entries"]:
        vid_id = str(entry["video_id"])
        steps, start, end, s_states, e_states = [], [], [], [], []
        for k, item in enumerate(entry["steps"]):
            steps.append(int(item["class_id"]))
            for key, out in (("start", start), ("end", end)):
                off = int(item[key])
                if off < 0 or off + nbytes > len(blob):
                    raise ManifestError(
                        f"entry {vid_id} step {k}: {key} reference needs bytes [{off}, {off + nbytes}) "
                        f"but blob has {len(blob)} bytes"
                    )
                out.append(np.frombuffer(blob, dtype="<f4", count=dim, offset=off))
            if "start_state" in item:
                s_states.append(int(item["start_state"]))
                e_states.append(int(item["end_state"]))
        has_states = len(s_states) == len(steps) and steps
        videos.append(Video(
            video_id=vid_id, task_id=int(entry["task_id"]), steps=np.array(steps, dtype=np.int64),
            start_features=np.array(start, dtype=np.float32).reshape(-1, dim),
            end_features=np.array(end, dtype=np.float32).reshape(-1, dim),
            start_states=np.array(s_states, dtype=np.int64) if has_states else None,
            end_states=np.array(e_states, dtype=np.int64) if has_states else None,
        ))
    return videos
