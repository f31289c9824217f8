"""From per-position step distributions to plans: argmax, Viterbi, sampling."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import DescriptionMemory
from .dataworld import ProcedureSet
from .engine import no_grad
from .kernels import viterbi_batch
from .planner import PlannerModel

DEFAULT_SMOOTHING = 1e-6


@dataclass
class TransitionModel:
    counts: np.ndarray
    smoothing: float = DEFAULT_SMOOTHING
    A: np.ndarray = field(init=False)
    log_A: np.ndarray = field(init=False)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.float64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"counts must be square, got {counts.shape}")
        if self.smoothing <= 0:
            raise ValueError("smoothing must be positive")
        smoothed = counts + self.smoothing
        self.A = smoothed / smoothed.sum(axis=1, keepdims=True)
        self.log_A = np.log(self.A)

    @property
    def C(self) -> int:
        return self.counts.shape[0]

    @classmethod
    def uniform(cls, C: int) -> "TransitionModel":
        return cls(np.zeros((C, C), dtype=np.int64))

    def to_dict(self) -> dict:
        return {"smoothing": self.smoothing, "counts": np.asarray(self.counts, dtype=np.int64).tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "TransitionModel":
        return cls(np.array(doc["counts"], dtype=np.int64), float(doc["smoothing"]))


def build_transition(sequences: Iterable[Sequence[int]], C: int, smoothing: float = DEFAULT_SMOOTHING) -> TransitionModel:
    """Count consecutive step pairs within each training procedure."""
    counts = np.zeros((C, C), dtype=np.int64)
    n = 0
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.int64)
        n += 1
        if len(seq) > 1:
            np.add.at(counts, (seq[:-1], seq[1:]), 1)
    if n == 0:
        raise ValueError("build_transition: empty training set")
    return TransitionModel(counts, smoothing)


@dataclass
class PlanResult:
    steps: np.ndarray
    emission: np.ndarray
    score: float
    mid_states: np.ndarray | None = None
    mode: str = "viterbi"


def _check_emission(B: np.ndarray) -> np.ndarray:
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2:
        raise ValueError(f"emission must be T x C, got shape {B.shape}")
    if not np.all(np.isfinite(B)) or np.any(B < 0):
        raise ValueError("emission has negative or non-finite entries")
    zero = np.flatnonzero(B.sum(axis=1) <= 0)
    if zero.size:
        raise ValueError(f"emission rows {zero.tolist()} are all zero")
    with np.errstate(divide="ignore"):
        return np.log(B)


def path_score(log_B: np.ndarray, log_A: np.ndarray, steps: Sequence[int]) -> float:
    steps = np.asarray(steps)
    s = float(log_B[np.arange(len(steps)), steps].sum())
    if len(steps) > 1:
        s += float(log_A[steps[:-1], steps[1:]].sum())
    return s


def viterbi_decode(B: np.ndarray, transition: TransitionModel) -> PlanResult:
    """Most likely step sequence under emission ``B`` (T x C) and ``transition``.

    Uniform prior on the first step. Ties resolve to the lowest final class,
    then the lowest predecessor at each backtrace step.
    """
    log_B = _check_emission(B)
    if log_B.shape[1] != transition.C:
        raise ValueError(f"emission has {log_B.shape[1]} classes, transition has {transition.C}")
    paths, scores = viterbi_batch(log_B[None], transition.log_A)
    return PlanResult(steps=paths[0], emission=np.exp(log_B), score=float(scores[0]), mode="viterbi")


def argmax_decode(B: np.ndarray) -> PlanResult:
    log_B = _check_emission(B)
    steps = np.argmax(log_B, axis=1)
    return PlanResult(steps=steps, emission=np.exp(log_B), score=float(log_B[np.arange(len(steps)), steps].sum()),
                      mode="argmax")


def _log_softmax64(logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def decode_log_emissions(log_B: np.ndarray, mode: str, transition: TransitionModel | None) -> tuple[np.ndarray, np.ndarray]:
    """Batch decode ``(N, T, C)`` log emissions; returns paths and scores."""
    if mode == "argmax":
        steps = np.argmax(log_B, axis=-1)
        scores = np.take_along_axis(log_B, steps[..., None], axis=-1)[..., 0].sum(axis=-1)
        return steps, scores
    if mode == "viterbi":
        if transition is None:
            raise ValueError("viterbi decoding needs a transition model")
        return viterbi_batch(log_B, transition.log_A)
    raise ValueError(f"unknown decoding mode {mode!r}")


def _forward_eval(model: PlannerModel, s0, sT, T, memory, noise_rng=None, noise_scale=None):
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            return model(s0, sT, T, memory, noise_rng=noise_rng, noise_scale=noise_scale)
    finally:
        model.train(was_training)


def plan(model: PlannerModel, samples: ProcedureSet, memory: DescriptionMemory, mode: str = "viterbi",
         transition: TransitionModel | None = None, batch_size: int = 512) -> list[PlanResult]:
    """One deterministic forward pass per sample, then decode its emission matrix."""
    results = []
    T = samples.T
    for lo in range(0, len(samples), batch_size):
        out = _forward_eval(model, samples.s0[lo:lo + batch_size], samples.sT[lo:lo + batch_size], T, memory)
        log_B = _log_softmax64(out.logits.data)
        paths, scores = decode_log_emissions(log_B, mode, transition)
        for k in range(len(paths)):
            results.append(PlanResult(
                steps=paths[k], emission=np.exp(log_B[k]), score=float(scores[k]),
                mid_states=out.mid_states.data[k].copy(), mode=mode,
            ))
    return results


def predict_steps(model: PlannerModel, samples: ProcedureSet, memory: DescriptionMemory, mode: str = "argmax",
                  transition: TransitionModel | None = None) -> np.ndarray:
    if len(samples) == 0:
        return np.zeros((0, samples.T), dtype=np.int64)
    return np.stack([r.steps for r in plan(model, samples, memory, mode, transition)])


def emission_matrices(model: PlannerModel, samples: ProcedureSet, memory: DescriptionMemory) -> np.ndarray:
    out = _forward_eval(model, samples.s0, samples.sT, samples.T, memory)
    return np.exp(_log_softmax64(out.logits.data))


def sample_plans(model: PlannerModel, s0: np.ndarray, sT: np.ndarray, T: int, memory: DescriptionMemory,
                 n: int = 1500, seed: int = 0, mode: str = "viterbi", transition: TransitionModel | None = None,
                 noise_scale: float | None = None, batch_size: int = 512) -> list[PlanResult]:
    """``n`` plans for one observation pair, each from an independent noise draw on the queries."""
    if n <= 0:
        raise ValueError(f"sample_plans: n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    s0 = np.asarray(s0).reshape(1, -1)
    sT = np.asarray(sT).reshape(1, -1)
    results = []
    for lo in range(0, n, batch_size):
        m = min(batch_size, n - lo)
        out = _forward_eval(model, np.repeat(s0, m, 0), np.repeat(sT, m, 0), T, memory,
                            noise_rng=rng, noise_scale=noise_scale)
        log_B = _log_softmax64(out.logits.data)
        paths, scores = decode_log_emissions(log_B, mode, transition)
        for k in range(m):
            results.append(PlanResult(steps=paths[k], emission=np.exp(log_B[k]), score=float(scores[k]),
                                      mid_states=out.mid_states.data[k].copy(), mode=mode))
    return results


def write_plans(path: str | os.PathLike, plans: Sequence[PlanResult], sample_ids: Sequence[str]) -> Path:
    """JSON lines ``{sample_id, steps, score, mode}``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        for sid, p in zip(sample_ids, plans):
            rec = {"sample_id": sid, "steps": [int(s) for s in p.steps], "score": round(p.score, 10), "mode": p.mode}
            f.write(json.dumps(rec) + "\n")
    return path
