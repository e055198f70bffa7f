"""
Distortion and rate-distortion objectives.

J_dist is the pixel-averaged negative log-likelihood in nats; J_rate (see
`coding.entropy_models.rate_loss`) is in bits per pixel; α absorbs the unit
mismatch in J = α·J_dist + (1−α)·J_rate.
"""

from typing import Union

import numpy as np

from ..errors import ConfigError, ValidationError
from ..tensor import functional as F
from ..tensor.autograd import Tensor

IGNORE_LABEL = 0

Scalar = Union[Tensor, float]


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """(N, H, W) labels in 1..S → (N, S, H, W) one-hot; label 0 maps to all zeros."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > num_classes):
        raise ValidationError(f"labels must lie in [0, {num_classes}]")
    eye = np.concatenate([np.zeros((1, num_classes)), np.eye(num_classes)]).astype(np.float32)
    return np.moveaxis(eye[labels.astype(np.int64)], -1, 1)


def cross_entropy(logits: Tensor, target: Union[Tensor, np.ndarray], check: bool = True) -> Tensor:
    """−(1/|I|) Σ_i Σ_s ȳ_is log softmax(y)_is over labelled pixels.

    Pixels whose target row is all zeros (the ignore label) are left out of
    both the sum and |I|.
    """
    target_data = target.data if isinstance(target, Tensor) else np.asarray(target, np.float32)
    if target_data.shape != logits.shape:
        raise ValidationError(f"target {target_data.shape} does not match logits {logits.shape}")
    per_pixel = target_data.sum(axis=1)
    if check and (
        not np.all((target_data == 0) | (target_data == 1))
        or not np.all((per_pixel == 0) | (per_pixel == 1))
    ):
        raise ValidationError("target is not one-hot per pixel")
    count = int(np.count_nonzero(per_pixel))
    if count == 0:
        return Tensor(0.0)
    return F.sum(F.log_softmax(logits, axis=1) * Tensor(target_data)) * (-1.0 / count)


def rd_objective(j_dist: Scalar, j_rate: Scalar, alpha: float) -> Scalar:
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha * j_dist + (1.0 - alpha) * j_rate
