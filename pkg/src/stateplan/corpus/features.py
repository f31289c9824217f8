"""Frozen text featurizers and the canonical description-memory layout."""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .store import DescriptionCorpus

TextFeaturizer = Callable[[Sequence[str]], np.ndarray]
SIDES = ("before", "after")


class FeatureDimError(ValueError):
    pass


class HashedBagOfWords:
    """Sum of seeded per-token Gaussian vectors, L2-normalised."""

    _token = re.compile(r"[a-z0-9']+")

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _vec(self, token: str) -> np.ndarray:
        v = self._cache.get(token)
        if v is None:
            h = hashlib.blake2b(f"{self.seed}:{token}".encode(), digest_size=8).digest()
            v = np.random.default_rng(int.from_bytes(h, "little")).standard_normal(self.dim)
            self._cache[token] = v
        return v

    def __call__(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for i, text in enumerate(texts):
            for tok in self._token.findall(text.lower()):
                out[i] += self._vec(tok)
            n = np.linalg.norm(out[i])
            if n > 0:
                out[i] /= n
        return out.astype(np.float32)


class PrecomputedEmbeddings:
    """Lookup of vectors produced by an external sentence encoder, keyed by text."""

    def __init__(self, table: Mapping[str, np.ndarray]):
        dims = {np.asarray(v).shape for v in table.values()}
        if len(dims) > 1:
            raise FeatureDimError(f"precomputed embeddings have inconsistent shapes: {sorted(dims)}")
        self.table = {k: np.asarray(v, dtype=np.float32) for k, v in table.items()}
        self.dim = next(iter(dims))[0] if dims else 0

    def __call__(self, texts: Sequence[str]) -> np.ndarray:
        missing = [t for t in texts if t not in self.table]
        if missing:
            raise KeyError(f"{len(missing)} texts have no precomputed embedding, e.g. {missing[0]!r}")
        return np.stack([self.table[t] for t in texts]) if texts else np.zeros((0, self.dim), np.float32)

    def save(self, manifest_path: str | os.PathLike) -> None:
        manifest_path = Path(manifest_path)
        blob_path = manifest_path.with_suffix(".bin")
        texts = list(self.table)
        mat = np.stack([self.table[t] for t in texts]).astype("<f4") if texts else np.zeros((0, self.dim), "<f4")
        blob_path.write_bytes(mat.tobytes())
        doc = {"dim": int(self.dim), "blob": blob_path.name, "texts": texts}
        manifest_path.write_text(json.dumps(doc, indent=1) + "\n")

    @classmethod
    def load(cls, manifest_path: str | os.PathLike) -> "PrecomputedEmbeddings":
        manifest_path = Path(manifest_path)
        doc = json.loads(manifest_path.read_text())
        blob = (manifest_path.parent / doc["blob"]).read_bytes()
        n, dim = len(doc["texts"]), int(doc["dim"])
        if len(blob) != n * dim * 4:
            raise FeatureDimError(
                f"{manifest_path}: blob has {len(blob)} bytes, expected {n * dim * 4} for {n}x{dim} float32"
            )
        mat = np.frombuffer(blob, dtype="<f4").reshape(n, dim)
        return cls(dict(zip(doc["texts"], mat)))


@dataclass(frozen=True)
class DescriptionMemory:
    """Raw frozen features of every state description, in canonical row order.

    Rows are all before-descriptions ordered by (class, j), then all
    after-descriptions ordered the same way. ``step_features`` holds one row
    per class for the step descriptions.
    """

    features: np.ndarray
    step_features: np.ndarray
    C: int
    K: int

    def row(self, cid: int, side: str, j: int) -> int:
        if not 0 <= cid < self.C:
            raise IndexError(f"unknown step class {cid} (C={self.C})")
        if not 0 <= j < self.K:
            raise IndexError(f"description index {j} out of range (K={self.K})")
        return SIDES.index(side) * self.C * self.K + cid * self.K + j

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


def canonical_texts(corpus: DescriptionCorpus) -> list[str]:
    texts = []
    for side in SIDES:
        for _, sds in corpus:
            texts.extend(sds.sentences(side))
    return texts


def embed_corpus(corpus: DescriptionCorpus, featurizer: TextFeaturizer) -> DescriptionMemory:
    texts = canonical_texts(corpus)
    feats = np.asarray(featurizer(texts), dtype=np.float32)
    step_feats = np.asarray(featurizer([sds.step_description for _, sds in corpus]), dtype=np.float32)
    if feats.ndim != 2 or feats.shape[0] != len(texts):
        raise FeatureDimError(f"featurizer returned shape {feats.shape} for {len(texts)} descriptions")
    if step_feats.ndim != 2 or step_feats.shape[1] != feats.shape[1]:
        raise FeatureDimError(f"step description features {step_feats.shape} vs state features {feats.shape}")
    return DescriptionMemory(features=feats, step_features=step_feats, C=corpus.C, K=corpus.K)
