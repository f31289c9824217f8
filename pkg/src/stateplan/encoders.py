"""Projection of frozen visual/text features into the shared state space."""

from __future__ import annotations

import numpy as np

from .engine import Tensor, ops
from .engine.nn import FeedForward, Module


class ProjectionEncoder(Module):
    """Trainable two-layer projection on top of a frozen featurizer's output.

    Output rows are unit-L2-normalised when ``normalize`` is set.
    """

    def __init__(self, in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator,
                 dropout: float = 0.2, activation: str = "relu", normalize: bool = True):
        self.in_dim = in_dim
        self.proj = FeedForward(in_dim, hidden, out_dim, rng, dropout=dropout, activation=activation)
        self.normalize = normalize

    def forward(self, features) -> Tensor:
        x = features if isinstance(features, Tensor) else Tensor(np.asarray(features), dtype=self.proj.fc1.weight.dtype)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"encoder expects feature dim {self.in_dim}, got {x.shape[-1]}")
        y = self.proj(x)
        return ops.l2_normalize(y) if self.normalize else y


class StateEncoder(ProjectionEncoder):
    """Visual observation features -> state embeddings."""


class DescriptionEncoder(ProjectionEncoder):
    """Description text features -> description embeddings (rows of the memory)."""


def class_similarities(state: Tensor, memory: Tensor, C: int, K: int, side: str) -> Tensor:
    """For every class ``i``, the sum over ``j`` of <state, d_side_ij>.

    ``state`` is ``(..., D)``; ``memory`` is the canonical ``(2*C*K, D)``
    description matrix. Returns ``(..., C)``.
    """
    if memory.shape[0] != 2 * C * K:
        raise ValueError(f"memory has {memory.shape[0]} rows, expected 2*C*K = {2 * C * K}")
    if side == "before":
        rows = memory[: C * K]
    elif side == "after":
        rows = memory[C * K:]
    else:
        raise ValueError(f"side must be 'before' or 'after', got {side!r}")
    lead = state.shape[:-1]
    flat = ops.reshape(state, (-1, state.shape[-1])) if state.ndim != 2 else state
    dots = ops.matmul(flat, ops.transpose(rows, (1, 0)))
    grouped = ops.reshape(dots, lead + (C, K))
    return ops.sum(grouped, axis=-1)


def similarity(state: Tensor, memory: Tensor, cid: int, C: int, K: int, side: str) -> Tensor:
    """sim(state, A_cid) for one class and side."""
    if not 0 <= cid < C:
        raise IndexError(f"unknown step class {cid} (C={C})")
    return class_similarities(state, memory, C, K, side)[..., cid]
