"""
Edge encoding and cloud decoding.

Edge: pad x to the model stride → E, SE → round+clamp ĥ → code ĥ with the
factorized tables → σ = HD(ĥ) → pick Gaussian tables → round+clamp r̂ → code r̂.
Cloud: decode ĥ → σ = HD(ĥ) → decode r̂ with the same tables → JD → mask.
`segment_in_process` runs the same steps without the entropy coder.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..coding.entropy_models import compress_symbols, decompress_symbols
from ..coding.range_coder import CodedBuffer
from ..config import MODEL_STRIDE
from ..errors import ConfigError, DimensionError
from ..imaging import pad_to_multiple
from ..networks.joint_decoder import predict_mask
from ..networks.model import JointSegModel
from .container import BitstreamContainer, latent_grid

logger = logging.getLogger(__name__)

MAX_IMAGE_SIDE = 4096


@dataclass
class DecodedMask:
    mask: np.ndarray  # uint8 (H, W)
    logits: Optional[np.ndarray] = None  # (S, H_pad, W_pad)


def _check_image(image: np.ndarray) -> None:
    if image.ndim != 3 or image.shape[0] != 3:
        raise DimensionError(f"expected a (3, H, W) image, got {image.shape}")
    if max(image.shape[1:]) > MAX_IMAGE_SIDE:
        raise ConfigError(f"image {image.shape[1]}x{image.shape[2]} exceeds {MAX_IMAGE_SIDE} px")


def edge_encode(model: JointSegModel, image: np.ndarray) -> BitstreamContainer:
    tables = model.require_tables()
    _check_image(image)
    padded, (height, width) = pad_to_multiple(image.astype(np.float32), MODEL_STRIDE)
    r, h = model.analyse(padded[None])

    h_hat = model.hyper_symbols(h)
    b_h = compress_symbols(h_hat, model.hyper_indexes(h_hat.shape), tables.hyper)
    indexes = model.latent_model.build_indexes(model.sigma_from_hyper(h_hat))
    r_hat = model.latent_symbols(r, indexes)
    b_r = compress_symbols(r_hat, indexes, tables.latent)

    container = BitstreamContainer(
        model_id=model.config.model_id,
        height=height,
        width=width,
        hyper_height=h_hat.shape[1],
        hyper_width=h_hat.shape[2],
        channels=h_hat.shape[0],
        b_h=b_h.payload,
        b_r=b_r.payload,
        fused=model.fused,
    )
    logger.debug(
        f"ENCODE: {height}x{width} -> b_h={len(b_h.payload)}B b_r={len(b_r.payload)}B "
        f"bpp={container.bpp:.4f}"
    )
    return container


def cloud_decode(
    model: JointSegModel, container: BitstreamContainer, with_logits: bool = False
) -> DecodedMask:
    tables = model.require_tables()
    channels = model.config.feature_maps
    if container.channels != channels:
        raise DimensionError(f"container has {container.channels} channels, model {channels}")
    hyper_shape = (channels, *latent_grid(container.height, container.width))
    hyper_indexes = model.hyper_indexes(hyper_shape)
    h_hat = decompress_symbols(
        CodedBuffer(container.b_h, hyper_indexes.size), hyper_indexes, tables.hyper
    )
    indexes = model.latent_model.build_indexes(model.sigma_from_hyper(h_hat))
    r_hat = decompress_symbols(CodedBuffer(container.b_r, indexes.size), indexes, tables.latent)

    logits = model.decode_logits(r_hat, container.padded_size)
    mask = predict_mask(logits)[0, : container.height, : container.width]
    logger.debug(f"DECODE: model {container.model_id} -> mask {mask.shape}")
    return DecodedMask(mask=np.ascontiguousarray(mask), logits=logits[0] if with_logits else None)


def segment_in_process(model: JointSegModel, image: np.ndarray) -> np.ndarray:
    """Monolithic pipeline: identical quantization and clamping, no bitstreams."""
    model.require_tables()
    _check_image(image)
    padded, (height, width) = pad_to_multiple(image.astype(np.float32), MODEL_STRIDE)
    r, h = model.analyse(padded[None])
    h_hat = model.hyper_symbols(h)
    indexes = model.latent_model.build_indexes(model.sigma_from_hyper(h_hat))
    r_hat = model.latent_symbols(r, indexes)
    logits = model.decode_logits(r_hat, padded.shape[1:])
    return np.ascontiguousarray(predict_mask(logits)[0, :height, :width])
