"""Entropy coding: the range coder and the learned probability models."""

from .entropy_models import (
    FactorizedPrior,
    GaussianConditional,
    QuantizerMode,
    build_cdf_tables,
    quantize,
    rate_loss,
)
from .range_coder import CdfTable, CodedBuffer, decode, encode, pmf_to_cdf

__all__ = [
    "CdfTable",
    "CodedBuffer",
    "FactorizedPrior",
    "GaussianConditional",
    "QuantizerMode",
    "build_cdf_tables",
    "decode",
    "encode",
    "pmf_to_cdf",
    "quantize",
    "rate_loss",
]
