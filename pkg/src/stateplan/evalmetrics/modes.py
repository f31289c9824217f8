"""Metrics comparing a set of sampled plans with the distinct ground-truth plans of one context.

The definitions are a reconstruction: ModePrec is the share of samples that
equal some ground-truth plan, ModeRec the share of ground-truth plans hit at
least once, NLL the mean over ground-truth plans of minus the log of their
empirical sample frequency, and KL-Div is KL(ground truth || samples) over
the union support. Both empirical distributions get EPS added before
renormalising.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Hashable, Mapping, Sequence

EPS = 1e-8


@dataclass(frozen=True)
class ModeReport:
    kl_div: float
    nll: float
    mode_prec: float
    mode_rec: float
    num_contexts: int

    def as_dict(self) -> dict:
        return asdict(self)


def _key(plan) -> tuple[int, ...]:
    return tuple(int(s) for s in plan)


def context_mode_metrics(samples: Sequence[Sequence[int]], gts: Sequence[Sequence[int]],
                         eps: float = EPS) -> tuple[float, float, float, float]:
    """(KL-Div, NLL, ModePrec, ModeRec) for one context."""
    if len(samples) == 0:
        raise ValueError("mode metrics need at least one sampled plan per context")
    if len(gts) == 0:
        raise ValueError("mode metrics need at least one ground-truth plan per context")
    q_counts = Counter(_key(s) for s in samples)
    p_counts = Counter(_key(g) for g in gts)
    n_q, n_p = len(samples), len(gts)
    q = {k: c / n_q for k, c in q_counts.items()}
    p = {k: c / n_p for k, c in p_counts.items()}

    prec = sum(c for k, c in q_counts.items() if k in p) / n_q
    rec = sum(1 for k in p if k in q) / len(p)
    nll = -sum(math.log(max(q.get(k, 0.0), eps)) for k in p) / len(p)

    support = sorted(set(p) | set(q))
    ps = [p.get(k, 0.0) + eps for k in support]
    qs = [q.get(k, 0.0) + eps for k in support]
    zp, zq = sum(ps), sum(qs)
    kl = sum((a / zp) * math.log((a / zp) / (b / zq)) for a, b in zip(ps, qs))
    return max(0.0, kl), max(0.0, nll), 100.0 * prec, 100.0 * rec


def mode_metrics(samples: Mapping[Hashable, Sequence[Sequence[int]]],
                 gts: Mapping[Hashable, Sequence[Sequence[int]]], eps: float = EPS) -> ModeReport:
    """Average the per-context metrics over every context that has ground truth."""
    if not gts:
        raise ValueError("mode metrics: no contexts")
    missing = [c for c in gts if c not in samples]
    if missing:
        raise ValueError(f"mode metrics: no samples for contexts {missing[:5]}")
    rows = [context_mode_metrics(samples[c], gts[c], eps) for c in gts]
    n = len(rows)
    kl, nll, prec, rec = (sum(r[i] for r in rows) / n for i in range(4))
    return ModeReport(kl_div=kl, nll=nll, mode_prec=prec, mode_rec=rec, num_contexts=n)


def group_by_context(contexts: Sequence[Hashable], plans: Sequence[Sequence[int]]) -> dict[Hashable, list[tuple]]:
    out: dict[Hashable, list[tuple]] = {}
    for ctx, plan in zip(contexts, plans):
        out.setdefault(ctx, []).append(_key(plan))
    return out
