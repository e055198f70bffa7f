"""
Edge-side channels to the decoder.

`EdgeClient` talks to a `DecoderServer` over TCP; `InProcessChannel` hands
the same bytes straight to a `ModelRegistry`. Both return the decoded mask
and raise the ProtocolError subclass matching a failed status.
"""

import logging
import socket
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..config import parse_listen
from ..errors import TransportError
from .container import BitstreamContainer
from .protocol import Response, Status, error_for_status, read_frame, write_frame
from .rle import unrle_mask
from .server import ModelRegistry, handle_frame

logger = logging.getLogger(__name__)

# === Constants ===
DEFAULT_RETRY_COUNT = 3
DEFAULT_TIMEOUT_SECONDS = 30.0
RETRY_BACKOFF_SECONDS = 0.2


@dataclass
class ExchangeResult:
    """Container for one request/response attempt."""

    success: bool
    data: Optional[bytes] = None
    error: Optional[Exception] = None


class Channel(ABC):
    @abstractmethod
    def exchange(self, payload: bytes) -> bytes:
        """Send one request payload and return the raw response payload."""

    def send(self, container: BitstreamContainer) -> Response:
        return Response.unpack(self.exchange(container.pack()))

    def segment(self, container: BitstreamContainer) -> np.ndarray:
        response = self.send(container)
        if response.status != Status.OK:
            raise error_for_status(response.status)
        if (response.height, response.width) != (container.height, container.width):
            raise TransportError(
                f"response is {response.height}x{response.width}, "
                f"request was {container.height}x{container.width}"
            )
        return unrle_mask(response.payload, response.height, response.width)


class InProcessChannel(Channel):
    def __init__(self, registry: ModelRegistry) -> None:
        self.registry = registry

    def exchange(self, payload: bytes) -> bytes:
        return handle_frame(self.registry, payload).to_response().pack()


class EdgeClient(Channel):
    """TCP client; one persistent connection, reopened on transport failures."""

    def __init__(
        self,
        address: Tuple[str, int],
        timeout: float = DEFAULT_TIMEOUT_SECONDS,
        retries: int = DEFAULT_RETRY_COUNT,
    ) -> None:
        self.address = address
        self.timeout = timeout
        self.retries = max(1, retries)
        self._sock: Optional[socket.socket] = None

    @classmethod
    def from_listen(cls, listen: str, timeout: float = DEFAULT_TIMEOUT_SECONDS) -> "EdgeClient":
        return cls(parse_listen(listen), timeout)

    def connect(self) -> None:
        if self._sock is None:
            self._sock = socket.create_connection(self.address, timeout=self.timeout)
            logger.debug(f"CONNECT: {self.address[0]}:{self.address[1]}")

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def __enter__(self) -> "EdgeClient":
        self.connect()
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def try_exchange(self, payload: bytes) -> ExchangeResult:
        """Single request attempt."""
        try:
            self.connect()
            assert self._sock is not None
            stream = self._sock.makefile("rwb")
            try:
                write_frame(stream, payload)
                data = read_frame(stream)
            finally:
                stream.close()
            if data is None:
                raise TransportError("server closed the connection")
            return ExchangeResult(success=True, data=data)
        except (OSError, TransportError) as e:
            self.close()
            return ExchangeResult(success=False, error=e)

    def exchange(self, payload: bytes) -> bytes:
        target = f"{self.address[0]}:{self.address[1]}"
        for attempt in range(self.retries):
            result = self.try_exchange(payload)
            if result.success and result.data is not None:
                return result.data
            if attempt == self.retries - 1:
                logger.error(f"SEND_FAILED: {target} - All retries exhausted: {result.error}")
                raise TransportError(f"{target}: {result.error}") from result.error
            logger.warning(
                f"SEND_RETRY: {target} - Attempt {attempt + 1}/{self.retries} - "
                f"Error: {result.error}"
            )
            time.sleep(RETRY_BACKOFF_SECONDS * (attempt + 1))
        raise TransportError(f"{target}: no attempts made")
