"""
Training-time over-parameterization of the ASPP subblocks and exact fusion.

Training (K repetitions):
    dilated subblock   → K × [DConv3×3(d) + BN] + [Conv1×1 + BN], summed, ReLU
    pointwise subblock → K × [Conv1×1 + BN], summed, ReLU
    pool subblock      → AvgPool, K × [Conv1×1 + BN], summed, ReLU, Upsample

Inference: every BN folds into its conv (w·γ/√(var+eps), β − γ·mean/√(var+eps)),
the K dilated kernels add up, and 1×1 kernels land on the centre tap, leaving one
Conv(bias) + ReLU per subblock. The post-concat blocks and the upsampling
transposed conv keep their single conv + BN.
"""

import copy
import logging
from typing import List, Tuple

import numpy as np

from ..errors import ConfigError, StateError
from ..tensor import functional as F
from ..tensor.autograd import Tensor
from ..tensor.nn import BatchNorm2d, Conv2d, Module, Parameter, Profile, ReLU, Sequential, Shape
from .joint_decoder import POINTWISE, POOL, JointDecoder, dilated_name

logger = logging.getLogger(__name__)


def _branch(
    channels: int, kernel_size: int, dilation: int, rng: np.random.Generator
) -> Sequential:
    return Sequential(
        Conv2d(channels, channels, kernel_size, rng, dilation=dilation),
        BatchNorm2d(channels),
    )


class RepBlock(Module):
    """K parallel conv+BN branches (plus an optional 1×1 branch) summed before one ReLU."""

    def __init__(
        self,
        channels: int,
        kernel_size: int,
        dilation: int,
        repetitions: int,
        rng: np.random.Generator,
        with_pointwise: bool,
    ) -> None:
        super().__init__()
        self.channels = channels
        self.kernel_size = kernel_size
        self.dilation = dilation
        self.repetitions = repetitions
        for i in range(repetitions):
            setattr(self, f"branch{i}", _branch(channels, kernel_size, dilation, rng))
        self.pointwise = _branch(channels, 1, 1, rng) if with_pointwise else None

    def branches(self) -> List[Sequential]:
        found = [getattr(self, f"branch{i}") for i in range(self.repetitions)]
        return found + ([self.pointwise] if self.pointwise is not None else [])

    def forward(self, x: Tensor) -> Tensor:
        branches = self.branches()
        total = branches[0](x)
        for branch in branches[1:]:
            total = total + branch(x)
        return F.relu(total)

    def profile(self, shape: Shape) -> Profile:
        # costed as the single conv it fuses into
        c, h, w = shape
        macs = h * w * self.channels * c * self.kernel_size**2
        elements = self.channels * h * w
        return Profile(2 * macs + 2 * elements, macs, (self.channels, h, w))


class FusedBlock(Module):
    """Conv(bias) + ReLU produced by folding a subblock."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray, dilation: int) -> None:
        super().__init__()
        out_channels, in_channels, k, _ = weight.shape
        self.conv = Conv2d(
            in_channels, out_channels, k, np.random.default_rng(0), dilation=dilation, bias=True
        )
        self.conv.weight = Parameter(weight.astype(np.float32))
        self.conv.bias = Parameter(bias.astype(np.float32))
        self.relu = ReLU()

    def forward(self, x: Tensor) -> Tensor:
        return self.relu(self.conv(x))

    def profile(self, shape: Shape) -> Profile:
        conv = self.conv.profile(shape)
        return conv.then(self.relu.profile(conv.shape))


def fold_conv_bn(conv: Conv2d, bn: BatchNorm2d) -> Tuple[np.ndarray, np.ndarray]:
    """BN folded into the preceding conv, in float64."""
    gamma = bn.weight.data.astype(np.float64)
    beta = bn.bias.data.astype(np.float64)
    mean = bn.running_mean.astype(np.float64)
    scale = gamma / np.sqrt(bn.running_var.astype(np.float64) + bn.eps)
    weight = conv.weight.data.astype(np.float64) * scale[:, None, None, None]
    bias = beta - mean * scale
    if conv.bias is not None:
        bias = bias + conv.bias.data.astype(np.float64) * scale
    return weight, bias


def embed_center(weight: np.ndarray, kernel_size: int) -> np.ndarray:
    """Place a k'×k' kernel at the centre of a zero k×k kernel."""
    k = weight.shape[-1]
    if k == kernel_size:
        return weight
    pad = (kernel_size - k) // 2
    out = np.zeros(weight.shape[:2] + (kernel_size, kernel_size), dtype=weight.dtype)
    out[:, :, pad : pad + k, pad : pad + k] = weight
    return out


def fuse_block(block: Module) -> FusedBlock:
    if isinstance(block, RepBlock):
        weight = np.zeros(
            (block.channels, block.channels, block.kernel_size, block.kernel_size)
        )
        bias = np.zeros(block.channels)
        for branch in block.branches():
            w, b = fold_conv_bn(branch[0], branch[1])
            weight += embed_center(w, block.kernel_size)
            bias += b
        return FusedBlock(weight, bias, block.dilation)
    if isinstance(block, Sequential) and isinstance(block[0], Conv2d):
        conv = block[0]
        w, b = fold_conv_bn(conv, block[1])
        return FusedBlock(w, b, conv.dilation)
    raise StateError(f"cannot fuse a {type(block).__name__}")


def overparameterize(
    decoder: JointDecoder, repetitions: int, rng: np.random.Generator
) -> JointDecoder:
    """Swap the ASPP conv subblocks for their K-branch training form, in place."""
    if decoder.overparameterized or decoder.fused:
        raise StateError("decoder is already over-parameterized or fused")
    if repetitions < 1:
        raise ConfigError(f"repetitions must be >= 1, got {repetitions}")
    aspp = decoder.aspp
    channels = getattr(aspp, POINTWISE)[0].out_channels
    setattr(aspp, POINTWISE, RepBlock(channels, 1, 1, repetitions, rng, with_pointwise=False))
    getattr(aspp, POOL).project = RepBlock(
        channels, 1, 1, repetitions, rng, with_pointwise=False
    )
    for d in aspp.dilations:
        block = RepBlock(channels, 3, d, repetitions, rng, with_pointwise=True)
        setattr(aspp, dilated_name(d), block)
    decoder.overparameterized = True
    logger.debug(f"REPARAM_EXPAND: K={repetitions} over {len(aspp.dilations) + 2} subblocks")
    return decoder


def fuse(decoder: JointDecoder) -> JointDecoder:
    """Inference copy of `decoder` with every ASPP conv subblock folded to one conv."""
    if decoder.training:
        raise StateError("fuse needs eval mode (frozen batch-norm statistics)")
    if decoder.fused:
        raise StateError("decoder is already fused")
    fused = copy.deepcopy(decoder)
    for name in fused.aspp.branch_names:
        if name == POOL:
            getattr(fused.aspp, POOL).project = fuse_block(getattr(decoder.aspp, POOL).project)
        else:
            setattr(fused.aspp, name, fuse_block(getattr(decoder.aspp, name)))
    fused.fused = True
    fused.eval()
    logger.debug(f"REPARAM_FUSE: {decoder.count_params()} -> {fused.count_params()} params")
    return fused
