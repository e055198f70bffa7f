"""
Module system and layers.

Modules register parameters, buffers and sub-modules by attribute assignment.
Each layer can also `profile()` itself: given an input shape (C, H, W) it
returns the output shape and its FLOP/MAC cost without running a forward pass.

FLOP convention: one multiply-accumulate = 2 FLOPs. Bias adds and batch norm
(counted as the bias it folds into) cost 1 FLOP per output element; ReLU and
softplus 1 per element; bilinear upsampling 4 per output element; global
pooling 1 per input element.
"""

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..errors import ConfigError, DimensionError, StateError
from . import functional as F
from .autograd import Tensor

Shape = Tuple[int, int, int]

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass
class Profile:
    """Static cost of a network at a given input size."""

    flops: int = 0
    macs: int = 0
    shape: Shape = (0, 0, 0)

    def then(self, other: "Profile") -> "Profile":
        return Profile(self.flops + other.flops, self.macs + other.macs, other.shape)


class Parameter(Tensor):
    def __init__(self, data: Any) -> None:
        super().__init__(data, requires_grad=True)


class Module:
    """Base class for layers and networks."""

    def __init__(self) -> None:
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name: str, value: Any) -> None:
        for registry in ("_parameters", "_buffers", "_modules"):
            self.__dict__[registry].pop(name, None)
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError

    def profile(self, shape: Shape) -> Profile:
        raise NotImplementedError(f"{type(self).__name__} has no static profile")

    # --- traversal ---

    def children(self) -> Iterator["Module"]:
        yield from self._modules.values()

    def named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self._modules.items():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, module in self.named_modules(prefix):
            for pname, param in module._parameters.items():
                yield (f"{name}.{pname}" if name else pname), param

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, module in self.named_modules(prefix):
            for bname in module._buffers:
                yield (f"{name}.{bname}" if name else bname), getattr(module, bname)

    def count_params(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def train(self, mode: bool = True) -> "Module":
        for _, module in self.named_modules():
            object.__setattr__(module, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    # --- state ---

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for name, param in self.named_parameters():
            state[name] = param.data
        for name, buf in self.named_buffers():
            state[name] = buf
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        own_params = dict(self.named_parameters())
        own_buffers = dict(self.named_buffers())
        expected = set(own_params) | set(own_buffers)
        if strict:
            missing = expected - set(state)
            unexpected = set(state) - expected
            if missing or unexpected:
                raise StateError(
                    f"state mismatch: missing={sorted(missing)[:5]} "
                    f"unexpected={sorted(unexpected)[:5]}"
                )
        for name, value in state.items():
            if name in own_params:
                target = own_params[name]
                if target.shape != tuple(value.shape):
                    raise DimensionError(f"{name}: expected {target.shape}, got {value.shape}")
                target.data = np.array(value, dtype=target.data.dtype)
            elif name in own_buffers:
                own_buffers[name][...] = value


def kaiming_normal(
    rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int
) -> np.ndarray:
    std = math.sqrt(2.0 / max(fan_in, 1))
    return (rng.standard_normal(shape) * std).astype(np.float32)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        dilation: int = 1,
        groups: int = 1,
        padding: F.Padding = "same",
        bias: bool = False,
    ) -> None:
        super().__init__()
        if in_channels % groups or out_channels % groups:
            raise ConfigError(
                f"Conv2d({in_channels}->{out_channels}): channels not divisible by groups={groups}"
            )
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.dilation = dilation
        self.groups = groups
        self.padding = padding if stride == 1 else (kernel_size - 1) // 2 * dilation
        fan_in = in_channels // groups * kernel_size * kernel_size
        self.weight = Parameter(
            kaiming_normal(
                rng, (out_channels, in_channels // groups, kernel_size, kernel_size), fan_in
            )
        )
        self.bias: Optional[Parameter] = (
            Parameter(np.zeros(out_channels, dtype=np.float32)) if bias else None
        )

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(
            x,
            self.weight,
            self.bias,
            stride=self.stride,
            dilation=self.dilation,
            groups=self.groups,
            padding=self.padding,
        )

    def profile(self, shape: Shape) -> Profile:
        c, h, w = shape
        if c != self.in_channels:
            raise DimensionError(f"Conv2d expects {self.in_channels} channels, got {c}")
        ph, pw = F.resolve_padding(self.padding, (self.kernel_size,) * 2, self.dilation)
        ho = F.conv_output_size(h, self.kernel_size, self.stride, self.dilation, ph)
        wo = F.conv_output_size(w, self.kernel_size, self.stride, self.dilation, pw)
        macs = (
            ho * wo * self.out_channels * (c // self.groups) * self.kernel_size**2
        )
        flops = 2 * macs + (ho * wo * self.out_channels if self.bias is not None else 0)
        return Profile(flops, macs, (self.out_channels, ho, wo))


class ConvTranspose2d(Module):
    """Transposed convolution; output spatial size is exactly stride × input."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 2,
        groups: int = 1,
        bias: bool = False,
    ) -> None:
        super().__init__()
        if in_channels % groups or out_channels % groups:
            raise ConfigError(
                f"ConvTranspose2d({in_channels}->{out_channels}): "
                f"channels not divisible by groups={groups}"
            )
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.groups = groups
        fan_in = in_channels // groups * kernel_size * kernel_size
        self.weight = Parameter(
            kaiming_normal(
                rng, (in_channels, out_channels // groups, kernel_size, kernel_size), fan_in
            )
        )
        self.bias: Optional[Parameter] = (
            Parameter(np.zeros(out_channels, dtype=np.float32)) if bias else None
        )

    def forward(self, x: Tensor) -> Tensor:
        return F.conv_transpose2d(
            x, self.weight, self.bias, stride=self.stride, groups=self.groups
        )

    def profile(self, shape: Shape) -> Profile:
        c, h, w = shape
        if c != self.in_channels:
            raise DimensionError(f"ConvTranspose2d expects {self.in_channels} channels, got {c}")
        ho, wo = h * self.stride, w * self.stride
        macs = h * w * c * (self.out_channels // self.groups) * self.kernel_size**2
        flops = 2 * macs + (ho * wo * self.out_channels if self.bias is not None else 0)
        return Profile(flops, macs, (self.out_channels, ho, wo))


class BatchNorm2d(Module):
    def __init__(
        self, channels: int, eps: float = BN_EPS, momentum: float = BN_MOMENTUM
    ) -> None:
        super().__init__()
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.weight = Parameter(np.ones(channels, dtype=np.float32))
        self.bias = Parameter(np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_mean", np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_var", np.ones(channels, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return F.batchnorm2d(
            x,
            self.weight,
            self.bias,
            self.running_mean,
            self.running_var,
            self.eps,
            self.momentum,
            self.training,
        )

    def profile(self, shape: Shape) -> Profile:
        c, h, w = shape
        return Profile(c * h * w, 0, shape)


class ReLU(Module):
    def forward(self, x: Tensor) -> Tensor:
        return F.relu(x)

    def profile(self, shape: Shape) -> Profile:
        return Profile(int(np.prod(shape)), 0, shape)


class Softplus(Module):
    def forward(self, x: Tensor) -> Tensor:
        return F.softplus(x)

    def profile(self, shape: Shape) -> Profile:
        return Profile(int(np.prod(shape)), 0, shape)


class Sequential(Module):
    def __init__(self, *layers: Module) -> None:
        super().__init__()
        for index, layer in enumerate(layers):
            setattr(self, str(index), layer)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._modules.values())

    def __len__(self) -> int:
        return len(self._modules)

    def __getitem__(self, index: int) -> Module:
        return list(self._modules.values())[index]

    def forward(self, x: Tensor) -> Tensor:
        for layer in self:
            x = layer(x)
        return x

    def profile(self, shape: Shape) -> Profile:
        total = Profile(shape=shape)
        for layer in self:
            total = total.then(layer.profile(total.shape))
        return total


class Lambda(Module):
    """Parameter-free elementwise step with a fixed per-element cost."""

    def __init__(self, fn: Callable[[Tensor], Tensor], cost: int = 1) -> None:
        super().__init__()
        self.fn = fn
        self.cost = cost

    def forward(self, x: Tensor) -> Tensor:
        return self.fn(x)

    def profile(self, shape: Shape) -> Profile:
        return Profile(self.cost * int(np.prod(shape)), 0, shape)


def conv_bn(
    in_channels: int,
    out_channels: int,
    kernel_size: int,
    rng: np.random.Generator,
    relu: bool = True,
    **conv_kwargs: Any,
) -> Sequential:
    """Conv(no bias) → BatchNorm [→ ReLU]."""
    layers: List[Module] = [
        Conv2d(in_channels, out_channels, kernel_size, rng, **conv_kwargs),
        BatchNorm2d(out_channels),
    ]
    if relu:
        layers.append(ReLU())
    return Sequential(*layers)
