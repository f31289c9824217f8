"""Losses and the training loop.

Three objectives share one backward pass: a contrastive alignment of start
and goal observations with the before/after descriptions of the first and
last steps, a regression of decoded mid-states onto description averages,
and cross-entropy on the decoded steps. A task-classification term trains
the task feature.
"""

from __future__ import annotations

import copy
import csv
import io
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .corpus import DescriptionCorpus, DescriptionMemory
from .dataworld import ProcedureSet, sample_batch
from .encoders import class_similarities
from .engine import (
    Adam, ContractError, NumericalError, StepDecay, Tensor, backward, default_dtype,
    finite_diff_check, ops, save_checkpoint,
)
from .evalmetrics.evaluate import evaluate_model
from .inference import TransitionModel, build_transition
from .planner import PlannerModel, PlannerOutput

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "L_align", "L_state", "L_step", "L_task", "lr", "SR", "mAcc", "mIoU")


class LossWeights(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    w_align: float = Field(1.0, ge=0)
    w_state: float = Field(1.0, ge=0)
    w_step: float = Field(1.0, ge=0)
    w_task: float = Field(1.0, ge=0)


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    epochs: int = Field(500, ge=0)
    batch_size: int = Field(256, gt=0)
    lr: float = Field(5e-3, gt=0)
    decay: float = Field(0.65, gt=0, le=1)
    decay_every: int = Field(40, gt=0)
    seed: int = 0
    grad_check: bool = False
    eval_every: int = Field(10, gt=0)
    eval_mode: str = Field("viterbi", pattern="^(argmax|viterbi)$")


# -- losses ------------------------------------------------------------------

def loss_state_alignment(s0_enc: Tensor, sT_enc: Tensor, first_steps, last_steps, descriptions: Tensor,
                         C: int, K: int) -> Tensor:
    """CE of the start state over before-side class sims plus CE of the goal over after-side sims."""
    start = class_similarities(s0_enc, descriptions, C, K, "before")
    goal = class_similarities(sT_enc, descriptions, C, K, "after")
    return ops.add(ops.cross_entropy(start, first_steps), ops.cross_entropy(goal, last_steps))


def midstate_targets(steps, descriptions: Tensor, C: int, K: int) -> Tensor:
    """Per interior slot t: mean of after(a_t) and before(a_{t+1}) description embeddings.

    ``steps`` is ``(T,)`` or ``(B, T)``; the result is ``(..., T-1, D)``.
    """
    steps = np.asarray(steps, dtype=np.int64)
    if steps.shape[-1] < 2:
        raise ValueError("mid-state targets need at least two steps")
    if steps.size and (steps.min() < 0 or steps.max() >= C):
        raise ContractError(f"step label out of range [0, {C})")
    D = descriptions.shape[-1]
    before = ops.sum(ops.reshape(descriptions[: C * K], (C, K, D)), axis=1)
    after = ops.sum(ops.reshape(descriptions[C * K:], (C, K, D)), axis=1)
    total = ops.add(after[steps[..., :-1]], before[steps[..., 1:]])
    return ops.scale(total, 1.0 / (2 * K))


def loss_midstate(pred: Tensor, targets: Tensor) -> Tensor:
    """Squared error averaged over dims, summed over mid-states, averaged over the batch."""
    if pred.ndim >= 2 and targets.ndim >= 2 and pred.shape[-2] != targets.shape[-2]:
        raise ValueError(f"mid-state count mismatch: predicted {pred.shape[-2]} vs targets {targets.shape[-2]}")
    if pred.shape != targets.shape:
        raise ValueError(f"mid-state shape mismatch: {pred.shape} vs {targets.shape}")
    n_mid = pred.shape[-2] if pred.ndim >= 2 else 1
    return ops.scale(ops.mse(pred, targets), float(n_mid))


def loss_step(logits: Tensor, labels) -> Tensor:
    return ops.cross_entropy(logits, labels)


@dataclass
class LossTerms:
    total: Tensor
    align: float
    state: float
    step: float
    task: float


def combined_loss(model: PlannerModel, out: PlannerOutput, steps, tasks, weights: LossWeights) -> LossTerms:
    """Weighted sum; every term stays in the graph so all parameters receive a gradient."""
    steps = np.asarray(steps, dtype=np.int64)
    C, K = model.C, model.K
    l_align = loss_state_alignment(out.s0_enc, out.sT_enc, steps[:, 0], steps[:, -1], out.descriptions, C, K)
    l_state = loss_midstate(out.mid_states, midstate_targets(steps, out.descriptions, C, K))
    l_step = loss_step(out.logits, steps)
    total = ops.add(ops.add(ops.scale(l_align, weights.w_align), ops.scale(l_state, weights.w_state)),
                    ops.scale(l_step, weights.w_step))
    l_task_val = 0.0
    if out.task_logits is not None:
        l_task = ops.cross_entropy(out.task_logits, tasks)
        total = ops.add(total, ops.scale(l_task, weights.w_task))
        l_task_val = float(l_task.data)
    return LossTerms(total, float(l_align.data), float(l_state.data), float(l_step.data), l_task_val)


# -- loop --------------------------------------------------------------------

@dataclass
class FitResult:
    model: PlannerModel
    log: list[dict]
    transition: TransitionModel
    best_epoch: int = -1
    best_sr: float = -1.0
    seconds: float = 0.0
    gradcheck: object = None
    extra: dict = field(default_factory=dict)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return f"{v:.6f}"


def format_log(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in LOG_COLUMNS])
    return buf.getvalue()


def check_coverage(model: PlannerModel, memory: DescriptionMemory, data: ProcedureSet,
                   corpus: DescriptionCorpus | None = None) -> None:
    if memory.C != model.C or memory.K != model.K:
        raise ContractError(f"memory has C={memory.C}, K={memory.K}; model expects C={model.C}, K={model.K}")
    labels = np.unique(data.steps) if len(data) else np.zeros(0, np.int64)
    if corpus is not None:
        missing = corpus.covers(labels)
        if missing:
            raise ContractError(f"corpus has no descriptions for step classes {missing}")
    out_of_range = labels[(labels < 0) | (labels >= memory.C)]
    if out_of_range.size:
        raise ContractError(f"corpus has no descriptions for step classes {out_of_range.tolist()}")


def run_grad_check(model: PlannerModel, data: ProcedureSet, memory: DescriptionMemory, weights: LossWeights,
                   n: int = 4, max_entries: int = 6):
    """Finite-difference check of the combined loss on a float64 copy with dropout off."""
    probe = copy.deepcopy(model).to(np.float64).eval()
    batch = data.subset(np.arange(min(n, len(data))))

    def fn():
        out = probe(batch.s0, batch.sT, batch.T, memory, true_task=batch.task)
        return combined_loss(probe, out, batch.steps, batch.task, weights).total

    names, params = zip(*probe.named_parameters())
    with default_dtype(np.float64):
        return finite_diff_check(fn, list(params), tolerance=1e-3, step=1e-5, names=list(names),
                                 max_entries=max_entries, seed=0)


def fit(model: PlannerModel, train: ProcedureSet, memory: DescriptionMemory, cfg: TrainConfig,
        weights: LossWeights | None = None, eval_set: ProcedureSet | None = None,
        corpus: DescriptionCorpus | None = None, log_path: str | os.PathLike | None = None,
        checkpoint_path: str | os.PathLike | None = None, checkpoint_meta: dict | None = None) -> FitResult:
    """Train ``model`` in place and return it as of the final epoch.

    When ``eval_set`` is given it is scored every ``eval_every`` epochs (and
    at the last one); the parameters with the best SR so far are written to
    ``checkpoint_path``. The returned model is the final one, not the best.
    """
    weights = weights or LossWeights()
    check_coverage(model, memory, train, corpus)
    if len(train) == 0:
        raise ValueError("fit: empty training set")
    transition = build_transition(train.steps, model.C)
    result = FitResult(model=model, log=[], transition=transition)
    if cfg.grad_check:
        report = run_grad_check(model, train, memory, weights)
        result.gradcheck = report
        if not report.passed:
            raise ContractError(f"gradient check failed before training:\n{report}")

    opt = Adam(model.parameters(), lr=cfg.lr)
    schedule = StepDecay(cfg.lr, cfg.decay, cfg.decay_every)
    noise_rng = np.random.default_rng([cfg.seed, 7919]) if model.cfg.noise_std > 0 else None
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        model.train()
        opt.lr = schedule.lr_at(epoch)
        sums = np.zeros(4)
        seen = 0
        for b, idx in enumerate(sample_batch(len(train), cfg.batch_size, cfg.seed, epoch)):
            batch = train.subset(idx)
            try:
                out = model(batch.s0, batch.sT, batch.T, memory, true_task=batch.task, noise_rng=noise_rng)
                terms = combined_loss(model, out, batch.steps, batch.task, weights)
                if not math.isfinite(float(terms.total.data)):
                    raise NumericalError("loss is not finite")
                opt.zero_grad()
                backward(terms.total)
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch} batch {b}: {exc}") from exc
            for p in opt.params:
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
            opt.step()
            sums += len(idx) * np.array([terms.align, terms.state, terms.step, terms.task])
            seen += len(idx)
        avg = sums / seen
        row = {"epoch": epoch, "L_align": avg[0], "L_state": avg[1], "L_step": avg[2], "L_task": avg[3],
               "lr": opt.lr, "SR": None, "mAcc": None, "mIoU": None}
        last = epoch == cfg.epochs - 1
        if eval_set is not None and len(eval_set) and ((epoch + 1) % cfg.eval_every == 0 or last):
            m = evaluate_model(model, eval_set, memory, cfg.eval_mode, transition)
            row.update(m)
            if m["SR"] > result.best_sr:
                result.best_sr, result.best_epoch = m["SR"], epoch
                if checkpoint_path is not None:
                    meta = dict(checkpoint_meta or {}, epoch=epoch, SR=round(m["SR"], 6))
                    save_checkpoint(checkpoint_path, model.state_dict(), meta)
        result.log.append(row)
        log.debug("epoch %d: %s", epoch, row)
    result.seconds = time.perf_counter() - t0
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        Path(log_path).write_text(format_log(result.log))
    return result
