"""Edge/cloud split: bitstream container, codec, framing, decoder server and clients."""

from .client import EdgeClient, InProcessChannel
from .codec import DecodedMask, cloud_decode, edge_encode, segment_in_process
from .container import BitstreamContainer, payload_bpp
from .protocol import Response, Status
from .rle import rle_mask, unrle_mask
from .server import DecoderServer, DecodeResult, ModelRegistry, handle_frame, serve

__all__ = [
    "BitstreamContainer",
    "DecodeResult",
    "DecodedMask",
    "DecoderServer",
    "EdgeClient",
    "InProcessChannel",
    "ModelRegistry",
    "Response",
    "Status",
    "cloud_decode",
    "edge_encode",
    "handle_frame",
    "payload_bpp",
    "rle_mask",
    "segment_in_process",
    "serve",
    "unrle_mask",
]
