"""Sequence metrics, all in percent."""

from __future__ import annotations

from typing import Sequence

import numpy as np


def _pairs(preds, gts) -> list[tuple[np.ndarray, np.ndarray]]:
    preds, gts = list(preds), list(gts)
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    if not preds:
        raise ValueError("empty prediction batch")
    out = []
    for i, (p, g) in enumerate(zip(preds, gts)):
        p, g = np.asarray(p).ravel(), np.asarray(g).ravel()
        if len(p) != len(g):
            raise ValueError(f"sample {i}: prediction length {len(p)} != ground-truth length {len(g)}")
        out.append((p, g))
    return out


def success_rate(preds: Sequence[Sequence[int]], gts: Sequence[Sequence[int]]) -> float:
    pairs = _pairs(preds, gts)
    return 100.0 * float(np.mean([np.array_equal(p, g) for p, g in pairs]))


def mean_accuracy(preds: Sequence[Sequence[int]], gts: Sequence[Sequence[int]]) -> float:
    pairs = _pairs(preds, gts)
    return 100.0 * float(np.mean([np.mean(p == g) if len(g) else 1.0 for p, g in pairs]))


def mean_iou(preds: Sequence[Sequence[int]], gts: Sequence[Sequence[int]]) -> float:
    """Set overlap per sample; repeated steps count once."""
    pairs = _pairs(preds, gts)
    scores = []
    for p, g in pairs:
        sp, sg = set(p.tolist()), set(g.tolist())
        union = sp | sg
        scores.append(len(sp & sg) / len(union) if union else 1.0)
    return 100.0 * float(np.mean(scores))


def sequence_metrics(preds, gts) -> dict[str, float]:
    return {"SR": success_rate(preds, gts), "mAcc": mean_accuracy(preds, gts), "mIoU": mean_iou(preds, gts)}
