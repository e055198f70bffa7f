"""
Differentiable operations on `Tensor`.

Activations are laid out N×C×H×W. Convolutions are computed with an
im2col/matmul scheme per group; the transposed convolution is implemented as
the exact adjoint of `conv2d` so ⟨conv(x), y⟩ = ⟨x, convT(y)⟩.
"""

import math
from typing import Any, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from ..errors import ConfigError, DimensionError
from .autograd import Function, Tensor, as_tensor

Padding = Union[str, int, Tuple[int, int]]

LN2 = math.log(2.0)


# === Elementwise arithmetic ===


class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a + b

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return grad, grad


class Sub(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a - b

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return grad, -grad


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.saved = (a, b)
        return a * b

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        a, b = self.saved
        return grad * b, grad * a


class Div(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.saved = (a, b)
        return a / b

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        a, b = self.saved
        return grad / b, -grad * a / (b * b)


class Neg(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        return -a

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (-grad,)


class Power(Function):
    def forward(self, a: np.ndarray, exponent: float) -> np.ndarray:
        self.saved = (a, exponent)
        return a**exponent

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        a, exponent = self.saved
        return (grad * exponent * a ** (exponent - 1),)


class Exp(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        out = np.exp(a)
        self.saved = (out,)
        return out

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad * self.saved[0],)


class Log(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        self.saved = (a,)
        return np.log(a)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad / self.saved[0],)


class Abs(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        self.saved = (np.sign(a),)
        return np.abs(a)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad * self.saved[0],)


# === Activations ===


class ReLU(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        mask = a > 0
        self.saved = (mask,)
        return np.where(mask, a, 0).astype(a.dtype)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad * self.saved[0],)


class Softplus(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        self.saved = (a,)
        return np.logaddexp(0, a).astype(a.dtype)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad * special.expit(self.saved[0]),)


class Sigmoid(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        out = special.expit(a)
        self.saved = (out,)
        return out

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        out = self.saved[0]
        return (grad * out * (1 - out),)


class Tanh(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        out = np.tanh(a)
        self.saved = (out,)
        return out

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        out = self.saved[0]
        return (grad * (1 - out * out),)


class NormalCdf(Function):
    """Standard normal CDF Φ."""

    def forward(self, a: np.ndarray) -> np.ndarray:
        self.saved = (a,)
        return special.ndtr(a)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        a = self.saved[0]
        return (grad * np.exp(-0.5 * a * a) / math.sqrt(2 * math.pi),)


class LowerBound(Function):
    """max(a, bound); gradients still flow where they push `a` upwards."""

    def forward(self, a: np.ndarray, bound: float) -> np.ndarray:
        self.saved = (a >= bound,)
        return np.maximum(a, bound).astype(a.dtype)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad * (self.saved[0] | (grad < 0)),)


class StraightThroughRound(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        return np.rint(a)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad,)


# === Shape and reductions ===


class Sum(Function):
    def forward(self, a: np.ndarray, axis: Any = None, keepdims: bool = False) -> np.ndarray:
        self.saved = (a.shape, axis, keepdims)
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        shape, axis, keepdims = self.saved
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            axes = tuple(ax % len(shape) for ax in axes)
            for ax in sorted(axes):
                grad = np.expand_dims(grad, ax)
        return (np.broadcast_to(grad, shape),)


class Reshape(Function):
    def forward(self, a: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        self.saved = (a.shape,)
        return a.reshape(shape)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad.reshape(self.saved[0]),)


class Transpose(Function):
    def forward(self, a: np.ndarray, axes: Tuple[int, ...]) -> np.ndarray:
        self.saved = (np.argsort(axes),)
        return np.transpose(a, axes)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (np.transpose(grad, self.saved[0]),)


class MatMul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.saved = (a, b)
        return np.matmul(a, b)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        a, b = self.saved
        return np.matmul(grad, np.swapaxes(b, -1, -2)), np.matmul(np.swapaxes(a, -1, -2), grad)


class Concat(Function):
    def forward(self, *arrays: np.ndarray, axis: int = 1) -> np.ndarray:
        self.saved = (axis, [arr.shape[axis] for arr in arrays])
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        axis, sizes = self.saved
        cuts = np.cumsum(sizes)[:-1]
        return np.split(grad, cuts, axis=axis)


class GlobalAvgPool(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        self.saved = (a.shape,)
        return a.mean(axis=(2, 3), keepdims=True)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        shape = self.saved[0]
        return (np.broadcast_to(grad / (shape[2] * shape[3]), shape),)


def interpolation_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear interpolation weights with half-pixel centres (no corner alignment)."""
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    matrix = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    np.add.at(matrix, (rows, lo), 1.0 - frac)
    np.add.at(matrix, (rows, hi), frac)
    return matrix


class BilinearUpsample(Function):
    def forward(self, a: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
        ah = interpolation_matrix(a.shape[2], size[0]).astype(a.dtype)
        aw = interpolation_matrix(a.shape[3], size[1]).astype(a.dtype)
        self.saved = (ah, aw)
        return np.matmul(np.matmul(ah, a), aw.T)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        ah, aw = self.saved
        return (np.matmul(np.matmul(ah.T, grad), aw),)


class LogSoftmax(Function):
    def forward(self, a: np.ndarray, axis: int = 1) -> np.ndarray:
        shifted = a - a.max(axis=axis, keepdims=True)
        out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        self.saved = (out, axis)
        return out

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        out, axis = self.saved
        return (grad - np.exp(out) * grad.sum(axis=axis, keepdims=True),)


class Softmax(Function):
    def forward(self, a: np.ndarray, axis: int = 1) -> np.ndarray:
        e = np.exp(a - a.max(axis=axis, keepdims=True))
        out = e / e.sum(axis=axis, keepdims=True)
        self.saved = (out, axis)
        return out

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        out, axis = self.saved
        return (out * (grad - (grad * out).sum(axis=axis, keepdims=True)),)


# === Convolution ===


def _im2col(
    xp: np.ndarray, kh: int, kw: int, stride: int, dilation: int, ho: int, wo: int
) -> np.ndarray:
    taps = []
    for i in range(kh):
        for j in range(kw):
            r0, c0 = i * dilation, j * dilation
            taps.append(
                xp[
                    :,
                    :,
                    r0 : r0 + stride * (ho - 1) + 1 : stride,
                    c0 : c0 + stride * (wo - 1) + 1 : stride,
                ]
            )
    return np.stack(taps, axis=2)


def _col2im(
    cols: np.ndarray,
    padded_shape: Tuple[int, ...],
    kh: int,
    kw: int,
    stride: int,
    dilation: int,
) -> np.ndarray:
    out = np.zeros(padded_shape, dtype=cols.dtype)
    ho, wo = cols.shape[3], cols.shape[4]
    tap = 0
    for i in range(kh):
        for j in range(kw):
            r0, c0 = i * dilation, j * dilation
            out[
                :,
                :,
                r0 : r0 + stride * (ho - 1) + 1 : stride,
                c0 : c0 + stride * (wo - 1) + 1 : stride,
            ] += cols[:, :, tap]
            tap += 1
    return out


def _pad(a: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return a
    return np.pad(a, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def resolve_padding(padding: Padding, kernel: Tuple[int, int], dilation: int) -> Tuple[int, int]:
    """'same' pads by d·(k−1)/2 per side (d for a dilated 3×3)."""
    if padding == "same":
        return dilation * (kernel[0] - 1) // 2, dilation * (kernel[1] - 1) // 2
    if isinstance(padding, int):
        return padding, padding
    if isinstance(padding, tuple) and len(padding) == 2:
        return int(padding[0]), int(padding[1])
    raise ConfigError(f"unsupported padding: {padding!r}")


def conv_output_size(size: int, kernel: int, stride: int, dilation: int, pad: int) -> int:
    return (size + 2 * pad - dilation * (kernel - 1) - 1) // stride + 1


def conv_transpose_output_size(
    size: int, kernel: int, stride: int, dilation: int, pad: int, output_pad: int
) -> int:
    return (size - 1) * stride - 2 * pad + dilation * (kernel - 1) + 1 + output_pad


def _check_groups(channels: int, groups: int, what: str) -> None:
    if groups < 1 or channels % groups != 0:
        raise ConfigError(f"{what}: {channels} channels not divisible by groups={groups}")


class Conv2dFn(Function):
    def forward(  # type: ignore[override]
        self,
        x: np.ndarray,
        w: np.ndarray,
        stride: int = 1,
        dilation: int = 1,
        groups: int = 1,
        pad: Tuple[int, int] = (0, 0),
    ) -> np.ndarray:
        n, c, h, wd = x.shape
        f, cg, kh, kw = w.shape
        if c != cg * groups:
            raise DimensionError(f"conv2d: input has {c} channels, weight expects {cg * groups}")
        _check_groups(f, groups, "conv2d output")
        ho = conv_output_size(h, kh, stride, dilation, pad[0])
        wo = conv_output_size(wd, kw, stride, dilation, pad[1])
        if ho <= 0 or wo <= 0:
            raise DimensionError(f"conv2d: input {h}x{wd} too small for kernel {kh}x{kw}")
        xp = _pad(x, *pad)
        cols = _im2col(xp, kh, kw, stride, dilation, ho, wo)
        cols = cols.reshape(n, groups, cg * kh * kw, ho * wo)
        wm = w.reshape(groups, f // groups, cg * kh * kw)
        self.saved = (x.shape, xp.shape, cols, wm, w.shape, stride, dilation, groups, pad)
        return np.matmul(wm, cols).reshape(n, f, ho, wo)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        x_shape, xp_shape, cols, wm, w_shape, stride, dilation, groups, pad = self.saved
        n, c, h, wd = x_shape
        f, cg, kh, kw = w_shape
        ho, wo = grad.shape[2], grad.shape[3]
        go = grad.reshape(n, groups, f // groups, ho * wo)
        dw = np.matmul(go, np.swapaxes(cols, -1, -2)).sum(axis=0).reshape(w_shape)
        dcols = np.matmul(np.swapaxes(wm, -1, -2), go).reshape(n, c, kh * kw, ho, wo)
        dxp = _col2im(dcols, xp_shape, kh, kw, stride, dilation)
        dx = dxp[:, :, pad[0] : pad[0] + h, pad[1] : pad[1] + wd]
        return dx, dw


class ConvTranspose2dFn(Function):
    def forward(  # type: ignore[override]
        self,
        y: np.ndarray,
        w: np.ndarray,
        stride: int = 2,
        dilation: int = 1,
        groups: int = 1,
        pad: int = 0,
        output_pad: int = 0,
    ) -> np.ndarray:
        n, c_in, h, wd = y.shape
        c_w, fg, kh, kw = w.shape
        if c_in != c_w:
            raise DimensionError(f"conv_transpose2d: input has {c_in} channels, weight {c_w}")
        _check_groups(c_in, groups, "conv_transpose2d input")
        f = fg * groups
        ho = conv_transpose_output_size(h, kh, stride, dilation, pad, output_pad)
        wo = conv_transpose_output_size(wd, kw, stride, dilation, pad, output_pad)
        wm = w.reshape(groups, c_in // groups, fg * kh * kw)
        yr = y.reshape(n, groups, c_in // groups, h * wd)
        dcols = np.matmul(np.swapaxes(wm, -1, -2), yr).reshape(n, f, kh * kw, h, wd)
        full = _col2im(dcols, (n, f, ho + 2 * pad, wo + 2 * pad), kh, kw, stride, dilation)
        self.saved = (yr, wm, w.shape, stride, dilation, groups, pad, (h, wd), y.shape)
        return full[:, :, pad : pad + ho, pad : pad + wo]

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        yr, wm, w_shape, stride, dilation, groups, pad, (h, wd), y_shape = self.saved
        n = grad.shape[0]
        _, fg, kh, kw = w_shape
        gp = _pad(grad, pad, pad)
        cols = _im2col(gp, kh, kw, stride, dilation, h, wd)
        cols = cols.reshape(n, groups, fg * kh * kw, h * wd)
        dy = np.matmul(wm, cols).reshape(y_shape)
        dw = np.matmul(yr, np.swapaxes(cols, -1, -2)).sum(axis=0).reshape(w_shape)
        return dy, dw


class BatchNormFn(Function):
    def forward(  # type: ignore[override]
        self,
        x: np.ndarray,
        gamma: np.ndarray,
        beta: np.ndarray,
        mean: np.ndarray,
        var: np.ndarray,
        eps: float,
    ) -> np.ndarray:
        shape = (1, -1, 1, 1)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
        self.saved = (xhat, inv_std, gamma)
        return xhat * gamma.reshape(shape) + beta.reshape(shape)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        xhat, inv_std, gamma = self.saved
        shape = (1, -1, 1, 1)
        dgamma = (grad * xhat).sum(axis=(0, 2, 3))
        dbeta = grad.sum(axis=(0, 2, 3))
        dx = grad * (gamma * inv_std).reshape(shape)
        return dx, dgamma, dbeta, None, None


class BatchNormTrainFn(BatchNormFn):
    """Batch-statistics normalisation; mean/var inputs are the batch moments."""

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        xhat, inv_std, gamma = self.saved
        shape = (1, -1, 1, 1)
        count = grad.size / grad.shape[1]
        dgamma = (grad * xhat).sum(axis=(0, 2, 3))
        dbeta = grad.sum(axis=(0, 2, 3))
        dxhat = grad * gamma.reshape(shape)
        dx = (
            inv_std.reshape(shape)
            / count
            * (
                count * dxhat
                - dxhat.sum(axis=(0, 2, 3), keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            )
        )
        return dx, dgamma, dbeta, None, None


# === Public functional API ===


def add(a: Any, b: Any) -> Tensor:
    return Add.apply(as_tensor(a), as_tensor(b))


def sub(a: Any, b: Any) -> Tensor:
    return Sub.apply(as_tensor(a), as_tensor(b))


def mul(a: Any, b: Any) -> Tensor:
    return Mul.apply(as_tensor(a), as_tensor(b))


def div(a: Any, b: Any) -> Tensor:
    return Div.apply(as_tensor(a), as_tensor(b))


def neg(a: Tensor) -> Tensor:
    return Neg.apply(a)


def power(a: Tensor, exponent: float) -> Tensor:
    return Power.apply(a, exponent=exponent)


def exp(a: Tensor) -> Tensor:
    return Exp.apply(a)


def log(a: Tensor) -> Tensor:
    return Log.apply(a)


def log2(a: Tensor) -> Tensor:
    return mul(Log.apply(a), 1.0 / LN2)


def abs(a: Tensor) -> Tensor:  # noqa: A001
    return Abs.apply(a)


def relu(a: Tensor) -> Tensor:
    return ReLU.apply(a)


def softplus(a: Tensor) -> Tensor:
    return Softplus.apply(a)


def sigmoid(a: Tensor) -> Tensor:
    return Sigmoid.apply(a)


def tanh(a: Tensor) -> Tensor:
    return Tanh.apply(a)


def normal_cdf(a: Tensor) -> Tensor:
    return NormalCdf.apply(a)


def lower_bound(a: Tensor, bound: float) -> Tensor:
    return LowerBound.apply(a, bound=bound)


def ste_round(a: Tensor) -> Tensor:
    """Round to nearest integer with an identity (straight-through) gradient."""
    return StraightThroughRound.apply(a)


def sum(a: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(a, axis=axis, keepdims=keepdims)


def mean(a: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:
    total = sum(a, axis=axis, keepdims=keepdims)
    count = a.size // max(total.size, 1)
    return mul(total, 1.0 / count)


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    return Reshape.apply(a, shape=tuple(shape))


def transpose(a: Tensor, axes: Tuple[int, ...]) -> Tensor:
    return Transpose.apply(a, axes=tuple(axes))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(a, b)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    ref = tensors[0].shape
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            t.shape[i] != ref[i] for i in range(len(ref)) if i != axis % len(ref)
        ):
            raise DimensionError(f"concat: shape {t.shape} does not match {ref} off axis {axis}")
    return Concat.apply(*tensors, axis=axis)


def avg_pool_global(a: Tensor) -> Tensor:
    return GlobalAvgPool.apply(a)


def bilinear_upsample(
    a: Tensor, scale: Optional[int] = None, size: Optional[Tuple[int, int]] = None
) -> Tensor:
    if size is None:
        if scale is None:
            raise ConfigError("bilinear_upsample needs a scale or a target size")
        size = (a.shape[2] * scale, a.shape[3] * scale)
    return BilinearUpsample.apply(a, size=(int(size[0]), int(size[1])))


def log_softmax(a: Tensor, axis: int = 1) -> Tensor:
    return LogSoftmax.apply(a, axis=axis)


def softmax(a: Tensor, axis: int = 1) -> Tensor:
    return Softmax.apply(a, axis=axis)


def argmax(a: Union[Tensor, np.ndarray], axis: int = 1) -> np.ndarray:
    """Index of the largest entry; ties resolve to the lowest index."""
    data = a.data if isinstance(a, Tensor) else a
    return np.argmax(data, axis=axis)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    dilation: int = 1,
    groups: int = 1,
    padding: Padding = "same",
) -> Tensor:
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D tensors, got {x.shape} and {weight.shape}")
    _check_groups(x.shape[1], groups, "conv2d input")
    pad = resolve_padding(padding, weight.shape[2:], dilation)
    out = Conv2dFn.apply(x, weight, stride=stride, dilation=dilation, groups=groups, pad=pad)
    if bias is not None:
        out = add(out, reshape(bias, (1, -1, 1, 1)))
    return out


def conv_transpose2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 2,
    groups: int = 1,
    dilation: int = 1,
) -> Tensor:
    """Transposed convolution with H_out = stride·H_in exactly.

    Padding is (k−1)/2 per side and output padding stride−1.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(
            f"conv_transpose2d expects 4-D tensors, got {x.shape} and {weight.shape}"
        )
    pad = dilation * (weight.shape[2] - 1) // 2
    out = ConvTranspose2dFn.apply(
        x,
        weight,
        stride=stride,
        dilation=dilation,
        groups=groups,
        pad=pad,
        output_pad=stride - 1,
    )
    if bias is not None:
        out = add(out, reshape(bias, (1, -1, 1, 1)))
    return out


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    eps: float,
    momentum: float,
    training: bool,
) -> Tensor:
    """Batch normalisation over (N, H, W) per channel.

    In training mode the running statistics are updated in place as
    (1 − momentum)·old + momentum·batch, using the unbiased batch variance.
    """
    channels = x.shape[1]
    checked = (
        ("gamma", gamma.data),
        ("beta", beta.data),
        ("running_mean", running_mean),
        ("running_var", running_var),
    )
    for name, arr in checked:
        if arr.shape[0] != channels:
            raise DimensionError(
                f"batchnorm2d: {name} has {arr.shape[0]} entries, input {channels}"
            )
    if not training:
        return BatchNormFn.apply(
            x,
            gamma,
            beta,
            Tensor(running_mean),
            Tensor(running_var),
            eps=eps,
        )
    batch_mean = x.data.mean(axis=(0, 2, 3))
    batch_var = x.data.var(axis=(0, 2, 3))
    count = x.size // channels
    unbiased = batch_var * count / max(count - 1, 1)
    running_mean *= 1 - momentum
    running_mean += momentum * batch_mean
    running_var *= 1 - momentum
    running_var += momentum * unbiased
    return BatchNormTrainFn.apply(
        x, gamma, beta, Tensor(batch_mean), Tensor(batch_var), eps=eps
    )
