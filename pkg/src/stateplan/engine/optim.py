"""Adam and the step-decay learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ContractError, Parameter


@dataclass
class StepDecay:
    """``lr(epoch) = base_lr * gamma ** (epoch // every)``."""

    base_lr: float = 5e-3
    gamma: float = 0.65
    every: int = 40

    def lr_at(self, epoch: int) -> float:
        return self.base_lr * self.gamma ** (epoch // self.every)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 5e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8


class Adam:
    def __init__(self, params: list[Parameter], lr: float = 5e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(
            m=[np.zeros_like(p.data) for p in self.params],
            v=[np.zeros_like(p.data) for p in self.params],
            lr=lr, betas=betas, eps=eps,
        )

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = float(value)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        st = self.state
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ContractError(f"adam_step: parameter {i} of shape {p.shape} has no gradient")
            if p.grad.shape != p.shape:
                raise ContractError(f"adam_step: gradient shape {p.grad.shape} != parameter shape {p.shape}")
        st.step += 1
        b1, b2 = st.betas
        c1 = 1.0 - b1 ** st.step
        c2 = 1.0 - b2 ** st.step
        for p, m, v in zip(self.params, st.m, st.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (st.lr / c1) * m / (np.sqrt(v / c2) + st.eps)
            p.data = (p.data - update).astype(p.dtype)
