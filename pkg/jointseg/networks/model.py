"""
The assembled model: edge networks (E, SE), cloud networks (HD, JD) and the
two entropy models, plus checkpoint conversion.

Edge-side inference helpers and cloud-side helpers are kept separate so the
wire codec can run each half on its own; they share `hyper_symbols`,
`sigma_from_hyper` and `latent_symbols`, which is what makes the split and
the in-process pipeline agree bit for bit.
"""

import copy
import logging
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from ..coding.entropy_models import (
    CdfTableSet,
    FactorizedPrior,
    GaussianConditional,
    QuantizerMode,
    build_cdf_tables,
    clamp_to_tables,
    quantize,
    tables_from_arrays,
    tables_to_arrays,
)
from ..config import MODEL_STRIDE, ModelConfig, RunConfig, dump_config, parse_config
from ..errors import StateError
from ..tensor.autograd import Tensor, no_grad
from ..tensor.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from ..tensor.nn import Module
from .encoder import ImageEncoder
from .joint_decoder import JointDecoder
from .reparam import fuse, overparameterize
from .source_encoder import HyperDecoder, SourceEncoder

logger = logging.getLogger(__name__)

HYPER_TABLES = "tables.hyper"
LATENT_TABLES = "tables.latent"
FUSION_TOLERANCE = 1e-4


@dataclass
class ForwardResult:
    logits: Tensor
    p_r: Tensor
    p_h: Tensor


@dataclass(frozen=True)
class CodingTables:
    hyper: CdfTableSet
    latent: CdfTableSet


class JointSegModel(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        super().__init__()
        self.config = config
        self.encoder = ImageEncoder(config, rng)
        self.source_encoder = SourceEncoder(config, rng)
        self.hyper_decoder = HyperDecoder(config, rng)
        self.hyper_prior = FactorizedPrior(config.feature_maps, rng)
        self.latent_model = GaussianConditional()
        decoder = JointDecoder(config, rng)
        if config.overparameterize:
            overparameterize(decoder, config.repetitions, rng)
        self.decoder = decoder
        self.tables: Optional[CodingTables] = None

    @property
    def fused(self) -> bool:
        return bool(self.decoder.fused)

    # --- training ---

    def forward_train(
        self,
        x: Tensor,
        rng: np.random.Generator,
        mode: QuantizerMode = QuantizerMode.NOISE,
    ) -> ForwardResult:
        z = self.encoder(x)
        r, h = self.source_encoder(z)
        h_tilde = quantize(h, mode, rng)
        r_tilde = quantize(r, mode, rng)
        sigma = self.hyper_decoder(h_tilde, like=r.shape)
        return ForwardResult(
            logits=self.decoder(r_tilde, output_size=x.shape[2:]),
            p_r=self.latent_model.likelihood(r_tilde, sigma),
            p_h=self.hyper_prior.likelihood(h_tilde),
        )

    def update_tables(self) -> CodingTables:
        """Rebuild the integer coding tables from the current parameters."""
        self.tables = CodingTables(
            hyper=build_cdf_tables(self.hyper_prior),
            latent=build_cdf_tables(self.latent_model),
        )
        return self.tables

    def require_tables(self) -> CodingTables:
        if self.training:
            raise StateError("inference needs eval mode; call model.eval() first")
        if self.tables is None:
            raise StateError("entropy coding tables are not built; load a trained checkpoint")
        return self.tables

    # --- edge half ---

    def analyse(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """x (1, 3, H, W) → continuous latents r, h (batch axis dropped)."""
        with no_grad():
            r, h = self.source_encoder(self.encoder(Tensor(x)))
        return r.data[0], h.data[0]

    def hyper_indexes(self, shape: Tuple[int, ...]) -> np.ndarray:
        channels = shape[0]
        return np.broadcast_to(np.arange(channels).reshape(-1, 1, 1), shape)

    def hyper_symbols(self, h: np.ndarray) -> np.ndarray:
        """Round h and clamp into the factorized tables' support."""
        tables = self.require_tables()
        return clamp_to_tables(np.rint(h), self.hyper_indexes(h.shape), tables.hyper)

    # --- shared ---

    def sigma_from_hyper(self, h_hat: np.ndarray) -> np.ndarray:
        with no_grad():
            return self.hyper_decoder(Tensor(h_hat[None].astype(np.float32))).data[0]

    def latent_symbols(self, r: np.ndarray, indexes: np.ndarray) -> np.ndarray:
        tables = self.require_tables()
        return clamp_to_tables(np.rint(r), indexes, tables.latent)

    # --- cloud half ---

    def decode_logits(self, r_hat: np.ndarray, output_size: Tuple[int, int]) -> np.ndarray:
        with no_grad():
            logits = self.decoder(Tensor(r_hat[None].astype(np.float32)), output_size=output_size)
        return logits.data


def build_model(config: ModelConfig, seed: int = 0, fused: bool = False) -> JointSegModel:
    model = JointSegModel(config, np.random.default_rng(seed))
    if fused:
        model.eval()
        model.decoder = fuse(model.decoder)
    return model


def fuse_model(model: JointSegModel) -> JointSegModel:
    """Copy of an eval-mode model with JD fused; tables are shared."""
    model.require_tables()
    fused = copy.copy(model)
    for registry in ("_parameters", "_buffers", "_modules"):
        object.__setattr__(fused, registry, OrderedDict(getattr(model, registry)))
    fused.decoder = fuse(model.decoder)
    return fused


def fusion_error(
    reference: JointSegModel, fused: JointSegModel, samples: int = 8, seed: int = 0
) -> float:
    """Max abs difference of the two decoders on random latents."""
    rng = np.random.default_rng(seed)
    channels, grid = reference.config.feature_maps, 2
    worst = 0.0
    for _ in range(samples):
        r_hat = np.rint(rng.normal(0.0, 3.0, (channels, grid, grid)))
        size = (grid * MODEL_STRIDE, grid * MODEL_STRIDE)
        a = reference.decode_logits(r_hat, size)
        b = fused.decode_logits(r_hat, size)
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst


def to_checkpoint(model: JointSegModel, run_config: RunConfig) -> Checkpoint:
    arrays: Dict[str, np.ndarray] = dict(model.state_dict())
    if model.tables is not None:
        arrays.update(tables_to_arrays(HYPER_TABLES, model.tables.hyper))
        arrays.update(tables_to_arrays(LATENT_TABLES, model.tables.latent))
    return Checkpoint(arrays=arrays, config_text=dump_config(run_config), fused=model.fused)


def from_checkpoint(checkpoint: Checkpoint) -> Tuple[JointSegModel, RunConfig]:
    """Rebuild the model a checkpoint was written from, in eval mode."""
    run_config = parse_config(checkpoint.config_text)
    model = build_model(run_config.model, fused=checkpoint.fused)
    state = {k: v for k, v in checkpoint.arrays.items() if not k.startswith("tables.")}
    model.load_state_dict(state)
    hyper = tables_from_arrays(HYPER_TABLES, checkpoint.arrays)
    latent = tables_from_arrays(LATENT_TABLES, checkpoint.arrays)
    if hyper is not None and latent is not None:
        model.tables = CodingTables(hyper=hyper, latent=latent)
    else:
        model.update_tables()
    model.eval()
    return model, run_config


def save_model(
    path: Union[str, Path], model: JointSegModel, run_config: RunConfig
) -> Path:
    return save_checkpoint(path, to_checkpoint(model, run_config))


def load_model(path: Union[str, Path]) -> Tuple[JointSegModel, RunConfig]:
    return from_checkpoint(load_checkpoint(path))
