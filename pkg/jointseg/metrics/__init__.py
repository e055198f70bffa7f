"""Evaluation metrics and static complexity accounting."""

from .complexity import ComplexityReport, complexity_report, count_flops, count_params
from .miou import ConfusionMatrix, MiouResult, miou

__all__ = [
    "ComplexityReport",
    "ConfusionMatrix",
    "MiouResult",
    "complexity_report",
    "count_flops",
    "count_params",
    "miou",
]
