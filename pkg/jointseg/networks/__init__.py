"""Edge networks (E, SE), cloud networks (HD, JD) and the assembled model."""

from .encoder import ImageEncoder
from .joint_decoder import JointDecoder, predict_mask
from .model import (
    FUSION_TOLERANCE,
    CodingTables,
    ForwardResult,
    JointSegModel,
    build_model,
    from_checkpoint,
    fuse_model,
    fusion_error,
    load_model,
    save_model,
    to_checkpoint,
)
from .reparam import fuse, overparameterize
from .source_encoder import HyperDecoder, SourceEncoder

__all__ = [
    "FUSION_TOLERANCE",
    "CodingTables",
    "ForwardResult",
    "HyperDecoder",
    "ImageEncoder",
    "JointDecoder",
    "JointSegModel",
    "SourceEncoder",
    "build_model",
    "from_checkpoint",
    "fuse",
    "fuse_model",
    "fusion_error",
    "load_model",
    "overparameterize",
    "predict_mask",
    "save_model",
    "to_checkpoint",
]
