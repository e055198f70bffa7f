"""
Learned probability models for the two latents and their coding tables.

- `FactorizedPrior`: channel-wise monotone cumulative model for the
  hyper-latent ĥ, with learned tail quantiles fitted by an auxiliary loss.
- `GaussianConditional`: zero-mean discretised Gaussian for r̂ given σ, coded
  with one table per entry of a fixed geometric scale grid.

Both expose differentiable likelihoods for the rate term and `build_cdf_tables`
turns them into integer tables for the range coder. Values outside a table's
support are clamped into its edge bins, which carry the excluded tail mass.
"""

import logging
import math
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from ..errors import DimensionError, NumericError, StateError, ValidationError
from ..tensor import functional as F
from ..tensor.autograd import Tensor, float64, no_grad
from ..tensor.nn import Module, Parameter
from .range_coder import PRECISION, CdfTable, CodedBuffer, decode, encode, pmf_to_cdf

logger = logging.getLogger(__name__)

TAIL_MASS = 1e-9
LIKELIHOOD_FLOOR = 2.0**-24
SCALE_MIN = 0.11
SCALE_MAX = 256.0
SCALE_LEVELS = 64
FACTORIZED_FILTERS = (3, 3, 3)
FACTORIZED_INIT_SCALE = 10.0
MAX_FACTORIZED_SUPPORT = 1 << 12
# keeps |noise| strictly below 1/2 after float32 rounding for |v| < 8
NOISE_MARGIN = 2.0**-20


class QuantizerMode(Enum):
    NOISE = "noise"
    ROUND = "round"


def quantize(
    values: Tensor, mode: QuantizerMode, rng: Optional[np.random.Generator] = None
) -> Tensor:
    """Additive uniform noise in (−½, ½) for training, rounding for inference.

    Rounding uses a straight-through identity gradient.
    """
    if not np.all(np.isfinite(values.data)):
        raise NumericError("quantize: non-finite input")
    if mode is QuantizerMode.ROUND:
        return F.ste_round(values)
    if rng is None:
        raise StateError("noise quantization needs a random generator")
    limit = 0.5 - NOISE_MARGIN
    noise = np.clip(rng.uniform(-0.5, 0.5, size=values.shape), -limit, limit)
    return values + Tensor(noise)


def rate_loss(p_r: Tensor, p_h: Tensor, height: int, width: int) -> Tensor:
    """Expected bits per input pixel: mean over the batch of Σ −log2 P / (H·W)."""
    for name, probs in (("P_r", p_r), ("P_h", p_h)):
        if probs.size and not np.all(probs.data > 0):
            raise NumericError(f"rate_loss: {name} holds non-positive probabilities")
    batch = p_r.shape[0] if p_r.ndim else 1
    scale = -1.0 / (batch * height * width)
    return (F.sum(F.log2(p_r)) + F.sum(F.log2(p_h))) * scale


class FactorizedPrior(Module):
    """Per-channel cumulative c(v) built from a small monotone network."""

    def __init__(
        self,
        channels: int,
        rng: np.random.Generator,
        filters: Sequence[int] = FACTORIZED_FILTERS,
        init_scale: float = FACTORIZED_INIT_SCALE,
        tail_mass: float = TAIL_MASS,
    ) -> None:
        super().__init__()
        self.channels = channels
        self.tail_mass = tail_mass
        self.num_layers = len(filters) + 1
        widths = (1, *filters, 1)
        scale = init_scale ** (1.0 / self.num_layers)
        for i in range(self.num_layers):
            init = math.log(math.expm1(1.0 / scale / widths[i + 1]))
            setattr(
                self,
                f"matrix{i}",
                Parameter(np.full((channels, widths[i + 1], widths[i]), init, np.float32)),
            )
            setattr(
                self,
                f"bias{i}",
                Parameter(rng.uniform(-0.5, 0.5, (channels, widths[i + 1], 1)).astype(np.float32)),
            )
            if i < self.num_layers - 1:
                setattr(
                    self,
                    f"factor{i}",
                    Parameter(np.zeros((channels, widths[i + 1], 1), np.float32)),
                )
        self.quantiles = Parameter(
            np.tile(
                np.array([[-init_scale, 0.0, init_scale]], dtype=np.float32),
                (channels, 1, 1),
            )
        )

    def _logits_cumulative(self, inputs: Tensor, stop_gradient: bool) -> Tensor:
        logits = inputs
        for i in range(self.num_layers):
            matrix: Tensor = getattr(self, f"matrix{i}")
            bias: Tensor = getattr(self, f"bias{i}")
            if stop_gradient:
                matrix, bias = matrix.detach(), bias.detach()
            logits = F.matmul(F.softplus(matrix), logits) + bias
            if i < self.num_layers - 1:
                factor: Tensor = getattr(self, f"factor{i}")
                if stop_gradient:
                    factor = factor.detach()
                logits = logits + F.tanh(factor) * F.tanh(logits)
        return logits

    def cdf(self, values: np.ndarray) -> np.ndarray:
        """c(v) for values laid out (C, N), evaluated in float64."""
        with float64(), no_grad():
            logits = self._logits_cumulative(Tensor(values[:, None, :]), stop_gradient=True)
            return special.expit(logits.data[:, 0, :])

    def likelihood(self, h: Tensor) -> Tensor:
        """P(ĥ) = c(ĥ+½) − c(ĥ−½), floored at 2^-24."""
        n, c, height, width = h.shape
        if c != self.channels:
            raise DimensionError(f"factorized prior has {self.channels} channels, input {c}")
        v = F.reshape(F.transpose(h, (1, 0, 2, 3)), (c, 1, n * height * width))
        lower = self._logits_cumulative(v - 0.5, stop_gradient=False)
        upper = self._logits_cumulative(v + 0.5, stop_gradient=False)
        # evaluate in the left tail for numerical stability
        sign = Tensor(np.where(lower.data + upper.data > 0, -1.0, 1.0))
        lik = F.abs(F.sigmoid(sign * upper) - F.sigmoid(sign * lower))
        lik = F.lower_bound(lik, LIKELIHOOD_FLOOR)
        return F.transpose(F.reshape(lik, (c, n, height, width)), (1, 0, 2, 3))

    def aux_loss(self) -> Tensor:
        """Distance of the quantiles from their target tail probabilities.

        Measured on the logit scale, which has the same zeros as the
        probability-space distance but keeps gradients alive deep in the tails.
        """
        target_logit = math.log(2.0 / self.tail_mass - 1.0)
        target = Tensor(np.array([-target_logit, 0.0, target_logit]).reshape(1, 1, 3))
        logits = self._logits_cumulative(self.quantiles, stop_gradient=True)
        return F.sum(F.abs(logits - target))

    def support(self) -> Tuple[np.ndarray, np.ndarray]:
        """Integer support [⌊q_low⌋, ⌈q_high⌉] per channel."""
        q = self.quantiles.data[:, 0, :].astype(np.float64)
        if not np.all(np.isfinite(q)) or not np.all((q[:, 0] < q[:, 1]) & (q[:, 1] < q[:, 2])):
            raise StateError("factorized prior quantiles are not fitted (non-finite or unordered)")
        lo = np.floor(q[:, 0]).astype(np.int64)
        hi = np.ceil(q[:, 2]).astype(np.int64)
        if np.any(hi - lo + 1 > MAX_FACTORIZED_SUPPORT):
            raise StateError("factorized prior quantiles span too wide a support; run the aux fit")
        return lo, hi


class GaussianConditional(Module):
    """Zero-mean Gaussian over integers with per-element σ."""

    def __init__(
        self,
        scale_min: float = SCALE_MIN,
        scale_max: float = SCALE_MAX,
        levels: int = SCALE_LEVELS,
        tail_mass: float = TAIL_MASS,
    ) -> None:
        super().__init__()
        self.scale_min = scale_min
        self.tail_mass = tail_mass
        self.scale_table = np.exp(np.linspace(math.log(scale_min), math.log(scale_max), levels))

    def likelihood(self, r: Tensor, sigma: Tensor) -> Tensor:
        """Φ((k+½)/σ) − Φ((k−½)/σ), with σ clamped to σ_min and the result floored."""
        if r.shape != sigma.shape:
            raise DimensionError(f"likelihood: r̂ {r.shape} vs σ {sigma.shape}")
        scale = F.lower_bound(sigma, self.scale_min)
        magnitude = F.abs(r)
        upper = F.normal_cdf((0.5 - magnitude) / scale)
        lower = F.normal_cdf((-0.5 - magnitude) / scale)
        return F.lower_bound(upper - lower, LIKELIHOOD_FLOOR)

    def build_indexes(self, sigma: np.ndarray) -> np.ndarray:
        """Index of the nearest table scale not smaller than σ."""
        s = np.maximum(np.asarray(sigma, dtype=np.float64), self.scale_min)
        index = np.searchsorted(self.scale_table, s, side="left")
        return np.minimum(index, len(self.scale_table) - 1).astype(np.int64)


CdfTableSet = List[CdfTable]


def _factorized_tables(model: FactorizedPrior) -> CdfTableSet:
    lo, hi = model.support()
    grid = np.arange(lo.min(), hi.max() + 1, dtype=np.float64)
    values = np.broadcast_to(grid, (model.channels, grid.size))
    upper = model.cdf(values + 0.5)
    lower = model.cdf(values - 0.5)
    tables: CdfTableSet = []
    for c in range(model.channels):
        start, stop = lo[c] - lo.min(), hi[c] - lo.min() + 1
        pmf = np.abs(upper[c, start:stop] - lower[c, start:stop])
        pmf[0] += lower[c, start]
        pmf[-1] += 1.0 - upper[c, stop - 1]
        tables.append(CdfTable(pmf_to_cdf(pmf, PRECISION), offset=int(lo[c])))
    return tables


def _gaussian_tables(model: GaussianConditional) -> CdfTableSet:
    z = -special.ndtri(model.tail_mass)
    tables: CdfTableSet = []
    for scale in model.scale_table:
        k_max = max(0, math.ceil(z * scale - 0.5))
        k = np.abs(np.arange(-k_max, k_max + 1, dtype=np.float64))
        pmf = special.ndtr((0.5 - k) / scale) - special.ndtr((-0.5 - k) / scale)
        tail = special.ndtr(-(k_max + 0.5) / scale)
        pmf[0] += tail
        pmf[-1] += tail
        tables.append(CdfTable(pmf_to_cdf(pmf, PRECISION), offset=-k_max))
    return tables


def build_cdf_tables(model: Union[FactorizedPrior, GaussianConditional]) -> CdfTableSet:
    """One table per channel (factorized) or per scale-table entry (Gaussian)."""
    if isinstance(model, FactorizedPrior):
        tables = _factorized_tables(model)
    elif isinstance(model, GaussianConditional):
        tables = _gaussian_tables(model)
    else:
        raise ValidationError(f"no CDF tables for {type(model).__name__}")
    logger.debug(f"CDF_TABLES: {type(model).__name__} -> {len(tables)} tables")
    return tables


def tables_to_arrays(prefix: str, tables: CdfTableSet) -> Dict[str, np.ndarray]:
    """Flatten tables into float32 arrays for the checkpoint."""
    width = max(len(t.cdf) for t in tables)
    cdf = np.full((len(tables), width), -1.0, dtype=np.float32)
    for i, table in enumerate(tables):
        cdf[i, : len(table.cdf)] = table.cdf
    return {
        f"{prefix}.cdf": cdf,
        f"{prefix}.cdf_length": np.array([len(t.cdf) for t in tables], dtype=np.float32),
        f"{prefix}.offset": np.array([t.offset for t in tables], dtype=np.float32),
    }


def tables_from_arrays(prefix: str, arrays: Dict[str, np.ndarray]) -> Optional[CdfTableSet]:
    if f"{prefix}.cdf" not in arrays:
        return None
    cdf = arrays[f"{prefix}.cdf"]
    lengths = arrays[f"{prefix}.cdf_length"].astype(np.int64)
    offsets = arrays[f"{prefix}.offset"].astype(np.int64)
    return [
        CdfTable(tuple(int(v) for v in cdf[i, : lengths[i]]), offset=int(offsets[i]))
        for i in range(len(lengths))
    ]


def clamp_to_tables(
    values: np.ndarray, indexes: np.ndarray, tables: CdfTableSet
) -> np.ndarray:
    """Clamp integer values into the support of their table (edge tail bins)."""
    lows = np.array([t.min_value for t in tables], dtype=np.int64)
    highs = np.array([t.max_value for t in tables], dtype=np.int64)
    return np.clip(values.astype(np.int64), lows[indexes], highs[indexes])


def compress_symbols(
    values: np.ndarray, indexes: np.ndarray, tables: CdfTableSet
) -> CodedBuffer:
    flat_values = values.reshape(-1)
    flat_indexes = indexes.reshape(-1)
    return encode(flat_values.tolist(), [tables[i] for i in flat_indexes])


def decompress_symbols(
    buffer: CodedBuffer, indexes: np.ndarray, tables: CdfTableSet
) -> np.ndarray:
    flat_indexes = indexes.reshape(-1)
    symbols = decode(buffer, [tables[i] for i in flat_indexes], flat_indexes.size)
    return np.array(symbols, dtype=np.int64).reshape(indexes.shape)
