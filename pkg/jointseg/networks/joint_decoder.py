"""
Joint source and task decoder JD: r̂ (F, H/16, W/16) → logits (S, H, W) → mask.

    r̂ ─┬─ Conv1×1 + BN + ReLU ──────────────────────┐
       ├─ DConv3×3(d) + BN + ReLU   for each d ─────┤
       └─ AvgPool → Conv1×1 + BN + ReLU → Upsample ─┴─ Concat (5F)
    → Conv1×1 + BN + ReLU → Conv3×3 + BN + ReLU
    → grouped UpConv5×5 (×2) + BN + ReLU → Conv1×1(S) + BN + ReLU
    → bilinear ×8 → logits → Argmax

There is no source decoder back to pixels: nothing here maps r̂ to an image.
"""

from typing import List, Optional, Tuple

import numpy as np

from ..config import ModelConfig
from ..tensor import functional as F
from ..tensor.autograd import Tensor
from ..tensor.nn import (
    BatchNorm2d,
    ConvTranspose2d,
    Module,
    Profile,
    ReLU,
    Sequential,
    Shape,
    conv_bn,
)

POINTWISE = "pointwise"
POOL = "pool"
FINAL_UPSAMPLE = 8
UPSAMPLE_FLOPS_PER_ELEMENT = 4


def dilated_name(dilation: int) -> str:
    return f"dilated{dilation}"


def upsample_profile(channels: int, size: Tuple[int, int]) -> Profile:
    return Profile(UPSAMPLE_FLOPS_PER_ELEMENT * channels * size[0] * size[1], 0, (channels, *size))


class PoolBranch(Module):
    """Image-level features: global average, 1×1 projection, broadcast back."""

    def __init__(self, channels: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.project = conv_bn(channels, channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        pooled = self.project(F.avg_pool_global(x))
        return F.bilinear_upsample(pooled, size=x.shape[2:])

    def profile(self, shape: Shape) -> Profile:
        c, h, w = shape
        project = self.project.profile((c, 1, 1))
        up = upsample_profile(project.shape[0], (h, w))
        return Profile(c * h * w + project.flops + up.flops, project.macs, up.shape)


class ASPP(Module):
    def __init__(
        self, channels: int, dilations: Tuple[int, ...], rng: np.random.Generator
    ) -> None:
        super().__init__()
        self.branch_names: List[str] = [POINTWISE] + [dilated_name(d) for d in dilations] + [POOL]
        self.dilations = tuple(dilations)
        setattr(self, POINTWISE, conv_bn(channels, channels, 1, rng))
        for d in dilations:
            setattr(self, dilated_name(d), conv_bn(channels, channels, 3, rng, dilation=d))
        setattr(self, POOL, PoolBranch(channels, rng))

    def branches(self) -> List[Module]:
        return [getattr(self, name) for name in self.branch_names]

    def forward(self, x: Tensor) -> Tensor:
        return F.concat([branch(x) for branch in self.branches()], axis=1)

    def profile(self, shape: Shape) -> Profile:
        flops = macs = channels = 0
        for branch in self.branches():
            p = branch.profile(shape)
            flops, macs, channels = flops + p.flops, macs + p.macs, channels + p.shape[0]
        return Profile(flops, macs, (channels, shape[1], shape[2]))


class JointDecoder(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        super().__init__()
        f, s = config.feature_maps, config.num_classes
        self.num_classes = s
        self.overparameterized = False
        self.fused = False
        self.aspp = ASPP(f, tuple(config.dilations), rng)
        self.project = conv_bn(len(self.aspp.branch_names) * f, f, 1, rng)
        self.refine = conv_bn(f, f, 3, rng)
        self.upsample = Sequential(
            ConvTranspose2d(f, f, 5, rng, stride=2, groups=config.groups),
            BatchNorm2d(f),
            ReLU(),
        )
        self.classifier = conv_bn(f, s, 1, rng)

    def forward(self, r_hat: Tensor, output_size: Optional[Tuple[int, int]] = None) -> Tensor:
        x = self.refine(self.project(self.aspp(r_hat)))
        x = self.classifier(self.upsample(x))
        if output_size is None:
            output_size = (x.shape[2] * FINAL_UPSAMPLE, x.shape[3] * FINAL_UPSAMPLE)
        return F.bilinear_upsample(x, size=output_size)

    def profile(self, shape: Shape) -> Profile:
        p = self.aspp.profile(shape)
        for block in (self.project, self.refine, self.upsample, self.classifier):
            p = p.then(block.profile(p.shape))
        c, h, w = p.shape
        return p.then(upsample_profile(c, (h * FINAL_UPSAMPLE, w * FINAL_UPSAMPLE)))


def predict_mask(logits: np.ndarray) -> np.ndarray:
    """Argmax over classes; channel s is class s+1, ties go to the lower class."""
    return (F.argmax(logits, axis=1) + 1).astype(np.uint8)
