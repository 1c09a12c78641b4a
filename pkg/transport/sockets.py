"""
TCP carrier: the same frames as SimulatedChannel, over one connection per
database per session. A database serves one session at a time.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
from contextlib import contextmanager
from typing import Callable, Dict, Optional, Sequence, Tuple

from transport.transport import (
    HEADER_BYTES,
    Channel,
    FrameError,
    TransportConnectError,
    TransportError,
    error_frame,
    frame_length,
)

logger = logging.getLogger(__name__)

Endpoint = Tuple[str, int]

BUSY_REASON = "busy: another session is active"


def read_frame(rfile) -> Optional[bytes]:
    """One whole frame from a binary file object; None on a clean EOF."""
    header = rfile.read(HEADER_BYTES)
    if not header:
        return None
    if len(header) != HEADER_BYTES:
        raise FrameError("connection closed while reading a frame header")
    length = frame_length(header)
    payload = rfile.read(length)
    if len(payload) != length:
        raise FrameError("connection closed while reading a frame payload")
    return header + payload


def parse_endpoint(text: str) -> Endpoint:
    host, _, port = text.strip().rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint {text!r} is not host:port")
    return host, int(port)


# =============================================================================
# CLIENTE
# =============================================================================
class _Connection:
    def __init__(self, endpoint: Endpoint, timeout: float):
        try:
            self.sock = socket.create_connection(endpoint, timeout=timeout)
        except OSError as exc:
            raise TransportConnectError(f"cannot reach {endpoint[0]}:{endpoint[1]}: {exc}") from exc
        self.rfile = self.sock.makefile("rb")

    def exchange(self, frame: bytes) -> bytes:
        try:
            self.sock.sendall(frame)
            response = read_frame(self.rfile)
        except socket.timeout as exc:
            raise TransportError("timed out waiting for a response") from exc
        except OSError as exc:
            raise TransportError(f"connection failed: {exc}") from exc
        if response is None:
            raise TransportError("connection closed by the database")
        return response

    def close(self):
        self.rfile.close()
        self.sock.close()


class SocketChannel(Channel):
    def __init__(self, endpoints: Sequence[Endpoint], timeout: float = 10.0):
        super().__init__(len(endpoints))
        self.endpoints = list(endpoints)
        self.timeout = timeout
        self._connections: Dict[int, _Connection] = {}

    @contextmanager
    def session(self):
        opened = []
        try:
            for i, endpoint in enumerate(self.endpoints, start=1):
                self._connections[i] = _Connection(endpoint, self.timeout)
                opened.append(i)
            yield self
        finally:
            for i in opened:
                self._connections.pop(i).close()

    def _deliver(self, db_index: int, frame: bytes) -> bytes:
        conn = self._connections.get(db_index)
        if conn is not None:
            return conn.exchange(frame)
        conn = _Connection(self.endpoints[db_index - 1], self.timeout)
        try:
            return conn.exchange(frame)
        finally:
            conn.close()


# =============================================================================
# SERVIDOR
# =============================================================================
class _SessionHandler(socketserver.StreamRequestHandler):
    def setup(self):
        # StreamRequestHandler applies this to the connection
        self.timeout = self.server.service.idle_timeout
        super().setup()

    def handle(self):
        service: DatabaseService = self.server.service
        if not service.session_lock.acquire(timeout=service.busy_wait):
            try:
                if read_frame(self.rfile) is not None:
                    self.wfile.write(error_frame(BUSY_REASON))
            except (FrameError, OSError):
                pass
            logger.info("DB %d: rejected a concurrent session from %s", service.db_index, self.client_address)
            return
        try:
            while True:
                try:
                    frame = read_frame(self.rfile)
                except FrameError as exc:
                    self.wfile.write(error_frame(str(exc)))
                    return
                if frame is None:
                    return
                self.wfile.write(service.handler(frame))
        except OSError as exc:
            logger.warning("DB %d: session ended: %s", service.db_index, exc)
        finally:
            service.session_lock.release()


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class DatabaseService:
    """Hosts one database behind a TCP port."""

    def __init__(
        self,
        db_index: int,
        handler: Callable[[bytes], bytes],
        host: str = "127.0.0.1",
        port: int = 0,
        busy_wait: float = 1.0,
        idle_timeout: float = 30.0,
    ):
        self.db_index = db_index
        self.handler = handler
        # a new session waits this long for the previous one to drain
        self.busy_wait = busy_wait
        # a silent client loses its session after this long
        self.idle_timeout = idle_timeout
        self.session_lock = threading.Lock()
        self._server = _Server((host, port), _SessionHandler)
        self._server.service = self
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> Endpoint:
        host, port = self._server.server_address[:2]
        return host, port

    def serve_forever(self):
        logger.info("DB %d listening on %s:%d", self.db_index, *self.address)
        self._server.serve_forever()

    def start(self) -> "DatabaseService":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        if self._thread is not None:
            self._server.shutdown()
            self._thread.join()
        self._server.server_close()
