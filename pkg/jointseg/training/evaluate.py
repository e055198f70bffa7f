"""
Held-out evaluation: mIoU and both rate figures.

`bpp_actual` comes from the coded container of every image (real rounding,
real range coding). `bpp_estimate` is the training-time rate term (noise
proxy, eval-mode batch norm) on the same images with a fixed noise seed.
"""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..coding.entropy_models import QuantizerMode, rate_loss
from ..config import MODEL_STRIDE
from ..imaging import pad_to_multiple
from ..metrics.miou import ConfusionMatrix
from ..networks.model import JointSegModel
from ..tensor.autograd import Tensor, no_grad
from ..wire.codec import cloud_decode, edge_encode
from .data import Dataset
from .losses import IGNORE_LABEL

logger = logging.getLogger(__name__)

ESTIMATE_SEED = 2024


@dataclass
class EvalReport:
    miou: float
    per_class: np.ndarray  # IoU per class label 0..S (NaN where absent)
    bpp_actual: float
    bpp_estimate: float
    images: int
    bpp_per_image: List[float] = field(default_factory=list)

    @property
    def rate_gap(self) -> float:
        """|estimate − actual| / actual."""
        if self.bpp_actual == 0:
            return float("inf")
        return abs(self.bpp_estimate - self.bpp_actual) / self.bpp_actual

    def summary(self) -> str:
        return (
            f"mIoU={self.miou:.4f} bpp={self.bpp_actual:.4f} "
            f"bpp_est={self.bpp_estimate:.4f} images={self.images}"
        )


def estimate_bpp(model: JointSegModel, image: np.ndarray, rng: np.random.Generator) -> float:
    """Noise-proxy rate of one (3, H, W) image in bits per original pixel."""
    padded, (height, width) = pad_to_multiple(image.astype(np.float32), MODEL_STRIDE)
    with no_grad():
        out = model.forward_train(Tensor(padded[None]), rng, QuantizerMode.NOISE)
        return rate_loss(out.p_r, out.p_h, height, width).item()


def evaluate(model: JointSegModel, dataset: Dataset, limit: int = 0) -> EvalReport:
    """Run the coded pipeline over `dataset` (first `limit` images when > 0)."""
    model.require_tables()
    count = len(dataset) if limit <= 0 else min(limit, len(dataset))
    matrix = ConfusionMatrix(model.config.num_classes + 1, ignore_label=IGNORE_LABEL)
    rng = np.random.default_rng(ESTIMATE_SEED)
    actual: List[float] = []
    estimate: List[float] = []
    for index in range(count):
        sample = dataset[index]
        container = edge_encode(model, sample.image)
        matrix.update(sample.labels, cloud_decode(model, container).mask)
        actual.append(container.bpp)
        estimate.append(estimate_bpp(model, sample.image, rng))

    result = matrix.result()
    report = EvalReport(
        miou=result.miou,
        per_class=result.per_class,
        bpp_actual=float(np.mean(actual)) if actual else 0.0,
        bpp_estimate=float(np.mean(estimate)) if estimate else 0.0,
        images=count,
        bpp_per_image=actual,
    )
    logger.info(f"EVALUATE: {report.summary()}")
    return report
