"""Evaluation: sequence metrics, mode metrics, zero-shot step classification, ablations."""

from .evaluate import EvalReport, evaluate_model
from .metrics import mean_accuracy, mean_iou, sequence_metrics, success_rate
from .modes import EPS, ModeReport, context_mode_metrics, group_by_context, mode_metrics
from .stepcls import stepcls_predict, stepcls_scores, stepcls_zero_shot

__all__ = [
    "success_rate", "mean_accuracy", "mean_iou", "sequence_metrics",
    "mode_metrics", "context_mode_metrics", "group_by_context", "ModeReport", "EPS",
    "stepcls_zero_shot", "stepcls_predict", "stepcls_scores",
    "EvalReport", "evaluate_model",
]
