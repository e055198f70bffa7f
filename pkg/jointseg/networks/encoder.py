"""
Edge image encoder E: x (3, H, W) → z (C_z, H/16, W/16).

A reduced residual backbone: a stride-4 stem of two 3×3 convs, three residual
stages with strides (2, 2, 1), then a dilated stage (d=2) that widens to C_z
without further downsampling.
"""

from typing import List, Sequence

import numpy as np

from ..config import ENCODER_STRIDE, ModelConfig
from ..errors import ConfigError
from ..tensor import functional as F
from ..tensor.autograd import Tensor
from ..tensor.nn import Module, Profile, Sequential, Shape, conv_bn

FINAL_STAGE_DILATION = 2


class BasicBlock(Module):
    """conv3×3-BN-ReLU → conv3×3-BN, plus identity or 1×1 projection, then ReLU."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        stride: int = 1,
        dilation: int = 1,
    ) -> None:
        super().__init__()
        self.body = Sequential(
            conv_bn(in_channels, out_channels, 3, rng, stride=stride, dilation=dilation),
            conv_bn(out_channels, out_channels, 3, rng, relu=False, dilation=dilation),
        )
        self.shortcut = (
            conv_bn(in_channels, out_channels, 1, rng, relu=False, stride=stride)
            if stride != 1 or in_channels != out_channels
            else None
        )

    def forward(self, x: Tensor) -> Tensor:
        identity = self.shortcut(x) if self.shortcut is not None else x
        return F.relu(self.body(x) + identity)

    def profile(self, shape: Shape) -> Profile:
        body = self.body.profile(shape)
        extra = self.shortcut.profile(shape) if self.shortcut is not None else Profile()
        elementwise = 2 * int(np.prod(body.shape))  # residual add + ReLU
        return Profile(body.flops + extra.flops + elementwise, body.macs + extra.macs, body.shape)


def _stage(
    in_channels: int,
    out_channels: int,
    blocks: int,
    rng: np.random.Generator,
    stride: int,
    dilation: int = 1,
) -> Sequential:
    layers: List[Module] = [BasicBlock(in_channels, out_channels, rng, stride, dilation)]
    layers += [
        BasicBlock(out_channels, out_channels, rng, dilation=dilation) for _ in range(blocks - 1)
    ]
    return Sequential(*layers)


class ImageEncoder(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        super().__init__()
        stem = config.encoder_stem
        widths: Sequence[int] = config.encoder_widths
        self.out_channels = config.latent_channels
        self.stem = Sequential(
            conv_bn(3, stem, 3, rng, stride=2),
            conv_bn(stem, stem, 3, rng, stride=2),
        )
        self.stages = Sequential(
            _stage(stem, widths[0], config.encoder_blocks, rng, stride=2),
            _stage(widths[0], widths[1], config.encoder_blocks, rng, stride=2),
            _stage(widths[1], widths[2], config.encoder_blocks, rng, stride=1),
            _stage(
                widths[2],
                config.latent_channels,
                config.encoder_blocks,
                rng,
                stride=1,
                dilation=FINAL_STAGE_DILATION,
            ),
        )

    def forward(self, x: Tensor) -> Tensor:
        height, width = x.shape[2:]
        if height % ENCODER_STRIDE or width % ENCODER_STRIDE:
            raise ConfigError(
                f"encoder input {height}x{width} is not divisible by {ENCODER_STRIDE}; pad first"
            )
        return self.stages(self.stem(x))

    def profile(self, shape: Shape) -> Profile:
        stem = self.stem.profile(shape)
        return stem.then(self.stages.profile(stem.shape))
