"""
Source encoder SE (z → r, h) and hyperprior decoder HD (ĥ → σ).

SE keeps the latent r at the stride of z; its hyperprior branch reads |r| and
downsamples twice with grouped 5×5 convs, so h sits at stride 64. HD undoes
the two stride-2 steps with transposed convs and ends in softplus so σ > 0.
"""

from typing import Tuple

import numpy as np

from ..config import ModelConfig
from ..errors import DimensionError
from ..tensor import functional as F
from ..tensor.autograd import Tensor
from ..tensor.nn import (
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    Lambda,
    Module,
    Profile,
    ReLU,
    Sequential,
    Shape,
    Softplus,
)


class SourceEncoder(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        super().__init__()
        f, g = config.feature_maps, config.groups
        self.latent = Sequential(
            Conv2d(config.latent_channels, f, 5, rng, groups=g, bias=True),
            ReLU(),
            Conv2d(f, f, 1, rng, bias=True),
        )
        self.hyper = Sequential(
            Lambda(F.abs),
            Conv2d(f, f, 5, rng, stride=2, groups=g, bias=True),
            ReLU(),
            Conv2d(f, f, 5, rng, stride=2, groups=g, bias=True),
        )

    def forward(self, z: Tensor) -> Tuple[Tensor, Tensor]:
        r = self.latent(z)
        return r, self.hyper(r)

    def profile(self, shape: Shape) -> Profile:
        latent = self.latent.profile(shape)
        hyper = self.hyper.profile(latent.shape)
        return Profile(latent.flops + hyper.flops, latent.macs + hyper.macs, latent.shape)


class HyperDecoder(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        super().__init__()
        f = config.feature_maps
        self.layers = Sequential(
            ConvTranspose2d(f, f, 1, rng, stride=2),
            BatchNorm2d(f),
            ReLU(),
            ConvTranspose2d(f, f, 3, rng, stride=2),
            BatchNorm2d(f),
            Softplus(),
        )

    def forward(self, h_hat: Tensor, like: Tuple[int, ...] = ()) -> Tensor:
        sigma = self.layers(h_hat)
        if like and sigma.shape != tuple(like):
            raise DimensionError(f"σ has shape {sigma.shape}, latent has {tuple(like)}")
        return sigma

    def profile(self, shape: Shape) -> Profile:
        return self.layers.profile(shape)
