"""Confusion-matrix mIoU (rows: ground truth, columns: prediction)."""

from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np

from ..errors import ValidationError


@dataclass
class MiouResult:
    miou: float
    per_class: np.ndarray  # NaN where the class is absent from the ground truth


class ConfusionMatrix:
    def __init__(self, num_classes: int, ignore_label: Optional[int] = None) -> None:
        self.num_classes = num_classes
        self.ignore_label = ignore_label
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def update(self, gt: np.ndarray, pred: np.ndarray) -> "ConfusionMatrix":
        gt = np.asarray(gt).astype(np.int64, copy=False)
        pred = np.asarray(pred).astype(np.int64, copy=False)
        if gt.shape != pred.shape:
            raise ValidationError(f"mask shapes differ: {gt.shape} vs {pred.shape}")
        for name, arr in (("ground truth", gt), ("prediction", pred)):
            if arr.size and (arr.min() < 0 or arr.max() >= self.num_classes):
                raise ValidationError(f"{name} label outside [0, {self.num_classes})")
        keep = gt != self.ignore_label if self.ignore_label is not None else slice(None)
        flat = self.num_classes * gt[keep] + pred[keep]
        self.counts += np.bincount(flat.reshape(-1), minlength=self.num_classes**2).reshape(
            self.num_classes, self.num_classes
        )
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        self.counts += other.counts
        return self

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def result(self) -> MiouResult:
        tp = np.diag(self.counts).astype(np.float64)
        gt_count = self.counts.sum(axis=1)
        union = gt_count + self.counts.sum(axis=0) - tp
        present = gt_count > 0
        if self.ignore_label is not None:
            present[self.ignore_label] = False
        per_class = np.full(self.num_classes, np.nan)
        per_class[present] = tp[present] / union[present]
        miou = float(per_class[present].mean()) if present.any() else float("nan")
        return MiouResult(miou=miou, per_class=per_class)


def miou(
    preds: Iterable[np.ndarray],
    gts: Iterable[np.ndarray],
    num_classes: int,
    ignore_label: Optional[int] = None,
) -> Tuple[float, np.ndarray]:
    """mIoU over classes present in the ground truth, plus per-class IoU."""
    matrix = ConfusionMatrix(num_classes, ignore_label)
    for pred, gt in zip(preds, gts, strict=True):
        matrix.update(gt, pred)
    result = matrix.result()
    return result.miou, result.per_class
