"""Losses, optimizers, synthetic data, the training loop, evaluation and RD sweeps."""

from .data import FolderDataset, SyntheticDataset, iterate_batches, write_dataset
from .evaluate import EvalReport, evaluate
from .losses import IGNORE_LABEL, cross_entropy, one_hot, rd_objective
from .optim import Adam, clip_grad_norm, poly_lr
from .sweep import SweepGrid, SweepRow, pareto_front, rd_correlation, read_csv, run_sweep, write_csv
from .trainer import LossReport, Trainer, partition_parameters

__all__ = [
    "IGNORE_LABEL",
    "Adam",
    "EvalReport",
    "FolderDataset",
    "LossReport",
    "SweepGrid",
    "SweepRow",
    "SyntheticDataset",
    "Trainer",
    "clip_grad_norm",
    "cross_entropy",
    "evaluate",
    "iterate_batches",
    "one_hot",
    "pareto_front",
    "partition_parameters",
    "poly_lr",
    "rd_correlation",
    "rd_objective",
    "read_csv",
    "run_sweep",
    "write_csv",
    "write_dataset",
]
