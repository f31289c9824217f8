"""Ablation runs: train each arm over shared seeds and tabulate SR/mAcc/mIoU."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..corpus import DescriptionMemory
from ..dataworld import ProcedureSet
from ..planner import ModelConfig, PlannerModel
from ..training import LossWeights, TrainConfig, fit
from .evaluate import evaluate_model


@dataclass(frozen=True)
class Arm:
    name: str
    align: bool = True
    midstate: bool = True
    model: dict = field(default_factory=dict)
    mode: str = "viterbi"
    # arms that only change decoding reuse the model trained for this arm
    reuse: str | None = None


ARMS: dict[str, Arm] = {
    "a": Arm("a", align=False, midstate=False),
    "b": Arm("b", align=False, midstate=True),
    "c": Arm("c", align=True, midstate=False),
    "d": Arm("d", align=True, midstate=True),
    "one_decoder": Arm("one_decoder", model={"decoders": "one"}),
    "memory_random": Arm("memory_random", model={"memory": "random"}),
    "memory_step": Arm("memory_step", model={"memory": "step"}),
    "no_viterbi": Arm("no_viterbi", mode="argmax", reuse="d"),
}
TABLE_ARMS = ("a", "b", "c", "d")


@dataclass
class AblationResult:
    arms: list[str]
    seeds: list[int]
    runs: dict[str, list[dict]]

    def mean(self, arm: str) -> dict[str, float]:
        rows = self.runs[arm]
        return {k: float(np.mean([r[k] for r in rows])) for k in ("SR", "mAcc", "mIoU")}

    def to_markdown(self) -> str:
        lines = [
            "| | State Align. | Mid-state Pred. | SR | mAcc | mIoU |",
            "|---|:---:|:---:|---:|---:|---:|",
        ]
        for name in self.arms:
            arm = ARMS[name]
            m = self.mean(name)
            label = f"({name})" if name in TABLE_ARMS else name
            tick = ("x" if arm.align else "", "x" if arm.midstate else "")
            lines.append(f"| {label} | {tick[0]} | {tick[1]} | {m['SR']:.2f} | {m['mAcc']:.2f} | {m['mIoU']:.2f} |")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["arm", "seed", "SR", "mAcc", "mIoU"])
        for name in self.arms:
            for seed, r in zip(self.seeds, self.runs[name]):
                w.writerow([name, seed, f"{r['SR']:.6f}", f"{r['mAcc']:.6f}", f"{r['mIoU']:.6f}"])
            m = self.mean(name)
            w.writerow([name, "mean", f"{m['SR']:.6f}", f"{m['mAcc']:.6f}", f"{m['mIoU']:.6f}"])
        return buf.getvalue()


def train_arm(arm: Arm, seed: int, train: ProcedureSet, test: ProcedureSet, memory: DescriptionMemory,
              num_tasks: int, model_cfg: ModelConfig, train_cfg: TrainConfig,
              weights: LossWeights) -> tuple[PlannerModel, object]:
    cfg = model_cfg.model_copy(update={**arm.model, "seed": seed})
    model = PlannerModel(cfg, train.s0.shape[1], memory.feature_dim, memory.C, memory.K, num_tasks)
    w = weights.model_copy(update={
        "w_align": weights.w_align if arm.align else 0.0,
        "w_state": weights.w_state if arm.midstate else 0.0,
    })
    result = fit(model, train, memory, train_cfg.model_copy(update={"seed": seed}), w)
    return model, result.transition


def ablate(train: ProcedureSet, test: ProcedureSet, memory: DescriptionMemory, num_tasks: int,
           arms: Sequence[str] = TABLE_ARMS, seeds: Sequence[int] = (0, 1, 2, 3, 4),
           model_cfg: ModelConfig | None = None, train_cfg: TrainConfig | None = None,
           weights: LossWeights | None = None) -> AblationResult:
    unknown = [a for a in arms if a not in ARMS]
    if unknown:
        raise ValueError(f"unknown ablation arms {unknown}; choose from {sorted(ARMS)}")
    model_cfg = model_cfg or ModelConfig()
    train_cfg = train_cfg or TrainConfig()
    weights = weights or LossWeights()
    runs: dict[str, list[dict]] = {a: [] for a in arms}
    for seed in seeds:
        trained: dict[str, tuple] = {}
        for name in arms:
            arm = ARMS[name]
            source = ARMS[arm.reuse] if arm.reuse else arm
            if source.name not in trained:
                trained[source.name] = train_arm(source, seed, train, test, memory, num_tasks,
                                                 model_cfg, train_cfg, weights)
            model, transition = trained[source.name]
            runs[name].append(evaluate_model(model, test, memory, arm.mode, transition))
    return AblationResult(list(arms), list(seeds), runs)
