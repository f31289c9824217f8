"""Model-level evaluation over one or more horizons."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..corpus import DescriptionMemory
from ..dataworld import ProcedureSet
from ..inference import TransitionModel, predict_steps
from .metrics import sequence_metrics


@dataclass
class EvalReport:
    rows: list[dict] = field(default_factory=list)
    config_hash: str = ""
    seed: int = 0

    def add(self, T: int, metrics: dict[str, float], n: int) -> None:
        self.rows.append({"T": T, **metrics, "n": n})

    def check(self) -> None:
        for r in self.rows:
            for k in ("SR", "mAcc", "mIoU"):
                if not 0.0 <= r[k] <= 100.0:
                    raise ValueError(f"T={r['T']}: {k}={r[k]} outside [0, 100]")


def evaluate_model(model, samples: ProcedureSet, memory: DescriptionMemory, mode: str = "viterbi",
                   transition: TransitionModel | None = None) -> dict[str, float]:
    preds = predict_steps(model, samples, memory, mode, transition)
    return sequence_metrics(preds, samples.steps)
