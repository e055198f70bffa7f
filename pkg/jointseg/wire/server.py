"""
Cloud-side decoder server.

Each connection carries any number of request frames; every request gets
exactly one response frame. Connections are handled by a bounded worker
pool, so at most `workers` connections are decoded concurrently and the
rest wait for a free worker. A connection idle for longer than the timeout
is closed.

A frame whose header declares more than the frame limit is skipped unread
and answered with status 1; the connection stays open. A connection that
closes inside a frame gets a status 1 reply if it can still be written.
"""

import logging
import socket
import socketserver
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Set, Tuple, Union

import numpy as np

from ..config import EndpointConfig, parse_listen
from ..errors import (
    ConfigError,
    OversizeFrameError,
    ProtocolError,
    TransportError,
    UnknownModelError,
)
from ..networks.model import JointSegModel, load_model
from .codec import cloud_decode
from .container import BitstreamContainer
from .protocol import MAX_FRAME_BYTES, Response, Status, read_frame, skip_bytes, write_frame
from .rle import rle_mask

logger = logging.getLogger(__name__)


@dataclass
class DecodeResult:
    """Outcome of one request frame."""

    success: bool
    mask: Optional[np.ndarray] = None
    status: Status = Status.OK
    error: Optional[Exception] = None

    def to_response(self) -> Response:
        if not self.success or self.mask is None:
            return Response(self.status)
        height, width = self.mask.shape
        return Response(Status.OK, height, width, rle_mask(self.mask))


class ModelRegistry:
    """Models the server can decode with, keyed by model id."""

    def __init__(self, models: Iterable[JointSegModel] = ()) -> None:
        self._models: Dict[int, JointSegModel] = {}
        for model in models:
            self.add(model)

    def add(self, model: JointSegModel) -> None:
        model_id = model.config.model_id
        if model_id in self._models:
            raise ConfigError(f"model id {model_id} registered twice")
        model.require_tables()
        self._models[model_id] = model
        logger.info(f"REGISTRY_ADD: model {model_id} (fused={model.fused})")

    @classmethod
    def from_paths(cls, paths: Iterable[Union[str, Path]]) -> "ModelRegistry":
        return cls(load_model(path)[0] for path in paths)

    def get(self, model_id: int) -> JointSegModel:
        try:
            return self._models[model_id]
        except KeyError:
            raise UnknownModelError(f"no model registered with id {model_id}") from None

    def ids(self) -> List[int]:
        return sorted(self._models)

    def __len__(self) -> int:
        return len(self._models)


def handle_frame(registry: ModelRegistry, payload: bytes) -> DecodeResult:
    """Decode one request payload. Never raises."""
    try:
        container = BitstreamContainer.unpack(payload)
        model = registry.get(container.model_id)
        return DecodeResult(success=True, mask=cloud_decode(model, container).mask)
    except ProtocolError as e:
        logger.warning(f"DECODE_REJECTED: status={e.status} - {e}")
        return DecodeResult(success=False, status=Status(e.status), error=e)
    except Exception as e:
        logger.exception(f"DECODE_FAILED: {e}")
        return DecodeResult(success=False, status=Status.INTERNAL, error=e)


class FrameHandler(socketserver.StreamRequestHandler):
    server: "DecoderServer"

    def setup(self) -> None:
        self.timeout = self.server.idle_timeout
        super().setup()

    def handle(self) -> None:
        peer = "%s:%s" % self.client_address[:2]
        logger.debug(f"CONNECT: {peer}")
        served = 0
        while True:
            try:
                payload = read_frame(self.rfile, self.server.max_frame_bytes)
            except (socket.timeout, TimeoutError):
                logger.info(f"IDLE_TIMEOUT: {peer} after {served} frames")
                return
            except OversizeFrameError as e:
                logger.warning(f"FRAME_OVERSIZE: {peer} - {e}")
                try:
                    if not skip_bytes(self.rfile, e.length):
                        return
                except (socket.timeout, TimeoutError, ConnectionError):
                    return
                if not self._reply(DecodeResult(success=False, status=Status.CRC, error=e)):
                    return
                continue
            except TransportError as e:
                logger.warning(f"FRAME_ERROR: {peer} - {e}")
                self._reply(DecodeResult(success=False, status=Status.CRC, error=e))
                return
            except ConnectionError:
                return
            if payload is None:
                logger.debug(f"DISCONNECT: {peer} after {served} frames")
                return
            if not self._reply(handle_frame(self.server.registry, payload)):
                return
            served += 1

    def _reply(self, result: DecodeResult) -> bool:
        try:
            write_frame(self.wfile, result.to_response().pack())
            return True
        except OSError as e:
            logger.warning(f"REPLY_FAILED: {e}")
            return False


class DecoderServer(socketserver.TCPServer):
    allow_reuse_address = True

    def __init__(
        self,
        address: Tuple[str, int],
        registry: ModelRegistry,
        workers: int = 4,
        idle_timeout: float = 30.0,
        max_frame_bytes: int = MAX_FRAME_BYTES,
    ) -> None:
        if workers < 1:
            raise ConfigError("workers must be at least 1")
        if max_frame_bytes < 1:
            raise ConfigError("max_frame_bytes must be positive")
        self.registry = registry
        self.idle_timeout = idle_timeout
        self.max_frame_bytes = max_frame_bytes
        self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="decode")
        self._thread: Optional[threading.Thread] = None
        self._active: Set[socket.socket] = set()
        self._active_lock = threading.Lock()
        super().__init__(address, FrameHandler)

    @property
    def address(self) -> Tuple[str, int]:
        host, port = self.server_address[:2]
        return str(host), int(port)

    def process_request(self, request, client_address) -> None:  # type: ignore[no-untyped-def]
        self._pool.submit(self._process_in_worker, request, client_address)

    def _process_in_worker(self, request, client_address) -> None:  # type: ignore[no-untyped-def]
        with self._active_lock:
            self._active.add(request)
        try:
            self.finish_request(request, client_address)
        except Exception:
            self.handle_error(request, client_address)
        finally:
            with self._active_lock:
                self._active.discard(request)
            self.shutdown_request(request)

    def start(self) -> "DecoderServer":
        """Serve on a background thread (used by tests and the bench command)."""
        self._thread = threading.Thread(target=self.serve_forever, name="accept", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._thread is not None:
            self.shutdown()
            self._thread.join()
            self._thread = None
        self.server_close()

    def server_close(self) -> None:
        super().server_close()
        with self._active_lock:
            for request in list(self._active):
                try:
                    request.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
        self._pool.shutdown(wait=False, cancel_futures=True)


def serve(registry: ModelRegistry, endpoint: EndpointConfig) -> None:
    """Serve until interrupted."""
    if not len(registry):
        raise ConfigError("no models to serve")
    server = DecoderServer(
        parse_listen(endpoint.listen), registry, endpoint.workers, endpoint.timeout
    )
    host, port = server.address
    logger.info(
        f"SERVE_START: {host}:{port} models={registry.ids()} workers={endpoint.workers} "
        f"timeout={endpoint.timeout}s"
    )
    try:
        server.serve_forever()
    finally:
        server.server_close()
        logger.info("SERVE_STOP")
