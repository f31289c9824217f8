"""The planning network: state decoder for mid-states, step decoder for steps.

Both decoders are non-autoregressive transformers that cross-attend to the
description memory. The state decoder fills the masked mid-state slots
between the start and goal embeddings; the step decoder reads an interleaved
state/action query and emits one embedding per action slot, which a small
classifier turns into step logits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .corpus import DescriptionMemory
from .encoders import DescriptionEncoder, StateEncoder
from .engine import Parameter, Tensor, get_default_dtype, ops
from .engine.nn import Embedding, FeedForward, Linear, Module, TransformerDecoder


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    embed_dim: int = Field(128, gt=0)
    hidden: int = Field(128, gt=0)
    heads: int = Field(32, gt=0)
    blocks: int = Field(2, gt=0)
    dropout: float = Field(0.2, ge=0, lt=1)
    max_horizon: int = Field(6, ge=2)
    decoders: Literal["two", "one"] = "two"
    memory: Literal["state", "step", "random"] = "state"
    task_feature: bool = True
    noise_std: float = Field(0.0, ge=0)
    normalize: bool = True
    activation: Literal["relu", "gelu"] = "relu"
    seed: int = 0

    @model_validator(mode="after")
    def _heads_divide(self):
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        return self


@dataclass
class PlannerOutput:
    s0_enc: Tensor
    sT_enc: Tensor
    descriptions: Tensor
    mid_states: Tensor
    step_emb: Tensor
    logits: Tensor
    task_logits: Tensor | None


class PlannerModel(Module):
    def __init__(self, cfg: ModelConfig, visual_dim: int, text_dim: int, num_classes: int, K: int,
                 num_tasks: int):
        rng = np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.C, self.K, self.num_tasks = num_classes, K, num_tasks
        D = cfg.embed_dim
        dtype = get_default_dtype()
        self.state_encoder = StateEncoder(visual_dim, cfg.hidden, D, rng, cfg.dropout, cfg.activation, cfg.normalize)
        self.desc_encoder = DescriptionEncoder(text_dim, cfg.hidden, D, rng, cfg.dropout, cfg.activation, cfg.normalize)
        self.pos_state = Parameter((rng.standard_normal((cfg.max_horizon + 1, D)) * 0.1).astype(dtype))
        self.pos_step = Parameter((rng.standard_normal((2 * cfg.max_horizon + 1, D)) * 0.1).astype(dtype))
        self.state_decoder = TransformerDecoder(cfg.blocks, D, cfg.heads, cfg.hidden, cfg.dropout, rng)
        self.state_head = Linear(D, D, rng)
        self.step_decoder = (
            TransformerDecoder(cfg.blocks, D, cfg.heads, cfg.hidden, cfg.dropout, rng)
            if cfg.decoders == "two" else None
        )
        self.step_classifier = FeedForward(D, cfg.hidden, num_classes, rng, dropout=cfg.dropout)
        if cfg.task_feature:
            self.task_head = FeedForward(2 * D, cfg.hidden, num_tasks, rng, dropout=cfg.dropout)
            self.task_embed = Embedding(num_tasks, D, rng, std=0.1)
        else:
            self.task_head = None
            self.task_embed = None
        self.random_memory = (
            Parameter(rng.standard_normal((2 * num_classes * K, D)).astype(dtype))
            if cfg.memory == "random" else None
        )

    # -- pieces ------------------------------------------------------------
    @property
    def dtype(self):
        return self.pos_state.dtype

    def _t(self, x) -> Tensor:
        return Tensor(np.asarray(x), dtype=self.dtype)

    def encode_states(self, obs) -> Tensor:
        return self.state_encoder(self._t(obs))

    def encode_descriptions(self, memory: DescriptionMemory) -> Tensor:
        if memory.C != self.C or memory.K != self.K:
            raise ValueError(f"memory has C={memory.C}, K={memory.K}; model expects C={self.C}, K={self.K}")
        return self.desc_encoder(self._t(memory.features))

    def attention_memory(self, descriptions: Tensor, memory: DescriptionMemory) -> Tensor:
        if self.cfg.memory == "state":
            return descriptions
        if self.cfg.memory == "step":
            return self.desc_encoder(self._t(memory.step_features))
        return ops.l2_normalize(self.random_memory) if self.cfg.normalize else self.random_memory

    def task_feature(self, s0_enc: Tensor, sT_enc: Tensor, true_task=None) -> tuple[Tensor | None, Tensor | None]:
        """Task logits and the task embedding added to every query position.

        With ``true_task`` the ground-truth embedding is used (training);
        otherwise the embedding of the predicted task.
        """
        if self.task_head is None:
            return None, None
        if self.training and true_task is None:
            raise ValueError("task feature in training mode needs the ground-truth task labels")
        logits = self.task_head(ops.concat([s0_enc, sT_enc], axis=-1))
        idx = np.asarray(true_task) if true_task is not None else np.argmax(logits.data, axis=-1)
        return logits, self.task_embed(idx)

    def _noise(self, shape, rng, scale) -> Tensor | None:
        scale = self.cfg.noise_std if scale is None else scale
        if rng is None or scale <= 0:
            return None
        return self._t(rng.standard_normal(shape) * scale)

    def state_query(self, s0_enc: Tensor, sT_enc: Tensor, T: int) -> Tensor:
        """``[s0 + p0, p1, ..., p_{T-1}, sT + pT]``, shape ``(B, T+1, D)``."""
        B, D = s0_enc.shape
        p = self.pos_state
        first = ops.reshape(s0_enc + p[0], (B, 1, D))
        last = ops.reshape(sT_enc + p[T], (B, 1, D))
        mids = ops.add(self._t(np.zeros((B, T - 1, D))), p[1:T])
        return ops.concat([first, mids, last], axis=1)

    def step_query(self, s0_enc: Tensor, mid_states: Tensor | None, sT_enc: Tensor, T: int) -> Tensor:
        """Interleaved ``[s0+q0, q1, s1+q2, q3, ..., sT+q2T]``, shape ``(B, 2T+1, D)``.

        With ``mid_states=None`` the interior state slots carry positions only.
        """
        B, D = s0_enc.shape
        if mid_states is None:
            mid_states = self._t(np.zeros((B, T - 1, D)))
        states = ops.concat([ops.reshape(s0_enc, (B, 1, D)), mid_states, ops.reshape(sT_enc, (B, 1, D))], axis=1)
        slots = ops.concat([states, self._t(np.zeros((B, T, D)))], axis=1)
        order = np.empty(2 * T + 1, dtype=np.int64)
        order[0::2] = np.arange(T + 1)
        order[1::2] = T + 1 + np.arange(T)
        return ops.add(slots[:, order], self.pos_step[: 2 * T + 1])

    def decode_states(self, query: Tensor, memory: Tensor) -> Tensor:
        T = query.shape[1] - 1
        if T < 2:
            raise ValueError(f"decode_states needs horizon >= 2, got {T}")
        out = self.state_decoder(query, memory)
        return self.state_head(out[:, 1:T])

    def decode_steps(self, query: Tensor, memory: Tensor, T: int) -> Tensor:
        if query.shape[1] != 2 * T + 1:
            raise ValueError(f"step query length {query.shape[1]} != 2T+1 = {2 * T + 1}")
        decoder = self.step_decoder if self.step_decoder is not None else self.state_decoder
        out = decoder(query, memory)
        return out[:, 1::2]

    def classify_steps(self, step_emb: Tensor) -> Tensor:
        return self.step_classifier(step_emb)

    # -- full pass ---------------------------------------------------------
    def forward(self, s0, sT, T: int, memory: DescriptionMemory, true_task=None,
                noise_rng: np.random.Generator | None = None, noise_scale: float | None = None) -> PlannerOutput:
        if not 2 <= T <= self.cfg.max_horizon:
            raise ValueError(f"horizon {T} outside supported range [2, {self.cfg.max_horizon}]")
        s0_enc = self.encode_states(s0)
        sT_enc = self.encode_states(sT)
        B, D = s0_enc.shape
        descriptions = self.encode_descriptions(memory)
        mem = self.attention_memory(descriptions, memory)
        task_logits, task_vec = self.task_feature(s0_enc, sT_enc, true_task)

        def condition(q: Tensor) -> Tensor:
            if task_vec is not None:
                q = ops.add(q, ops.reshape(task_vec, (B, 1, D)))
            noise = self._noise(q.shape, noise_rng, noise_scale)
            return q if noise is None else ops.add(q, noise)

        if self.cfg.decoders == "two":
            q_s = condition(self.state_query(s0_enc, sT_enc, T))
            mid = self.decode_states(q_s, mem)
            q_a = condition(self.step_query(s0_enc, mid, sT_enc, T))
            step_emb = self.decode_steps(q_a, mem, T)
        else:
            q = condition(self.step_query(s0_enc, None, sT_enc, T))
            out = self.state_decoder(q, mem)
            mid = self.state_head(out[:, 2:2 * T - 1:2])
            step_emb = out[:, 1::2]
        logits = self.classify_steps(step_emb)
        return PlannerOutput(s0_enc, sT_enc, descriptions, mid, step_emb, logits, task_logits)
