"""Adam, global-norm gradient clipping and the polynomial learning-rate schedule."""

import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from ..errors import UsageError
from ..tensor.nn import Parameter

logger = logging.getLogger(__name__)

POLY_POWER = 0.9
ADAM_EPS = 1e-8


def poly_lr(step: int, lr0: float, max_steps: int) -> float:
    """η0·(1 − τ/τ_max)^0.9; zero (with a warning) past τ_max."""
    if step < 0 or max_steps <= 0:
        raise UsageError(f"poly_lr needs 0 <= step and max_steps > 0, got {step}/{max_steps}")
    if step > max_steps:
        logger.warning(f"LR_SCHEDULE: step {step} past max_steps {max_steps}, lr clamped to 0")
        return 0.0
    return lr0 * (1.0 - step / max_steps) ** POLY_POWER


def global_grad_norm(params: Sequence[Parameter]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(np.square(p.grad, dtype=np.float64)))
    return math.sqrt(total)


def clip_grad_norm(params: Sequence[Parameter], max_norm: float) -> float:
    """Scale gradients so their global L2 norm is at most `max_norm`; returns the pre-clip norm."""
    norm = global_grad_norm(params)
    if norm > max_norm and math.isfinite(norm):
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


class Adam:
    """Adam with bias correction and optional L2 weight decay."""

    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 1e-3,
        betas: tuple = (0.9, 0.99),
        eps: float = ADAM_EPS,
        weight_decay: float = 0.0,
    ) -> None:
        self.params: List[Parameter] = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0
        self.rejected_steps = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr: Optional[float] = None) -> bool:
        """Apply one update; a non-finite gradient rejects the whole step."""
        if any(p.grad is not None and not np.all(np.isfinite(p.grad)) for p in self.params):
            self.rejected_steps += 1
            logger.warning(
                f"ADAM_REJECT: non-finite gradient, {self.rejected_steps} rejected so far"
            )
            return False
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            update = lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)
            p.data = (p.data - update).astype(p.data.dtype, copy=False)
        return True
