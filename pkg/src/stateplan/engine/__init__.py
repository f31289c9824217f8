"""Minimal dense-tensor core: autodiff, layers, Adam, gradient checks."""

from . import nn, ops
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, finite_diff_check
from .optim import Adam, AdamState, StepDecay
from .tensor import (
    ContractError,
    NumericalError,
    Parameter,
    ShapeError,
    Tensor,
    backward,
    build_graph,
    default_dtype,
    get_default_dtype,
    no_grad,
)

__all__ = [
    "nn", "ops", "Tensor", "Parameter", "backward", "build_graph", "no_grad",
    "default_dtype", "get_default_dtype", "ShapeError", "NumericalError", "ContractError",
    "Adam", "AdamState", "StepDecay", "finite_diff_check", "GradCheckReport",
    "save_checkpoint", "load_checkpoint",
]
