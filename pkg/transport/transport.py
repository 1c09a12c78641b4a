"""
Byte-exact framing and the in-process carrier.

Frame: length (4 bytes BE, payload bytes) | tag (1 byte) | payload.
Every field symbol that crosses a channel is counted once, per database,
per direction and per ledger phase.
"""

from __future__ import annotations

import logging
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Dict, List, Mapping, Sequence, Tuple

from audit.ledger import (
    DOWNLOAD_NAIVE,
    DOWNLOAD_PIR,
    DOWNLOAD_SHARES,
    UPLOAD_COMBOS,
    UPLOAD_NAIVE,
    UPLOAD_SHARES,
    OverheadLedger,
)
from mdscode.mdscode import SHARE_HEADER_BYTES

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("!IB")
_U32 = struct.Struct("!I")
_BUNDLE_HEADER = struct.Struct("!HI")
_SHARE_COUNT_OFFSET = SHARE_HEADER_BYTES - 4

HEADER_BYTES = _HEADER.size
MAX_PAYLOAD = 2**32 - 1


# =============================================================================
# ERROS
# =============================================================================
class TransportError(RuntimeError):
    """Carrier failure: timeout, closed connection, unexpected response."""


class FrameError(TransportError):
    """Malformed frame: truncated, bad tag or length mismatch."""


class RemoteError(TransportError):
    """The database answered with an Error frame."""

    def __init__(self, db_index: int, reason: str):
        super().__init__(f"database {db_index}: {reason}")
        self.db_index = db_index
        self.reason = reason


class TransportConnectError(TransportError):
    """A database endpoint could not be reached."""


# =============================================================================
# TIPOS DE MENSAGEM
# =============================================================================
class MessageKind(IntEnum):
    GET_SHARE = 1
    SHARE_RESP = 2
    PIR_QUERY = 3
    PIR_ANSWER = 4
    UPLOAD_SHARE = 5
    UPLOAD_COMBOS = 6
    ACK = 7
    NAIVE_GET = 8
    NAIVE_RESP = 9
    NAIVE_PUSH = 10
    ERROR = 255


RESPONSE_KIND = {
    MessageKind.GET_SHARE: MessageKind.SHARE_RESP,
    MessageKind.PIR_QUERY: MessageKind.PIR_ANSWER,
    MessageKind.UPLOAD_SHARE: MessageKind.ACK,
    MessageKind.UPLOAD_COMBOS: MessageKind.ACK,
    MessageKind.NAIVE_GET: MessageKind.NAIVE_RESP,
    MessageKind.NAIVE_PUSH: MessageKind.ACK,
}

LEDGER_PHASE = {
    MessageKind.SHARE_RESP: DOWNLOAD_SHARES,
    MessageKind.PIR_ANSWER: DOWNLOAD_PIR,
    MessageKind.UPLOAD_SHARE: UPLOAD_SHARES,
    MessageKind.UPLOAD_COMBOS: UPLOAD_COMBOS,
    MessageKind.NAIVE_RESP: DOWNLOAD_NAIVE,
    MessageKind.NAIVE_PUSH: UPLOAD_NAIVE,
}


@dataclass(frozen=True)
class Frame:
    kind: MessageKind
    payload: bytes

    @property
    def length(self) -> int:
        return len(self.payload)


def frame_encode(kind: MessageKind, payload: bytes = b"") -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise FrameError(f"payload of {len(payload)} bytes does not fit a frame")
    return _HEADER.pack(len(payload), int(kind)) + payload


def frame_decode(data: bytes) -> Frame:
    if len(data) < HEADER_BYTES:
        raise FrameError(f"truncated frame: {len(data)} bytes")
    length, tag = _HEADER.unpack_from(data, 0)
    try:
        kind = MessageKind(tag)
    except ValueError as exc:
        raise FrameError(f"unknown frame tag {tag}") from exc
    payload = data[HEADER_BYTES:]
    if len(payload) != length:
        raise FrameError(f"frame declares {length} payload bytes, carries {len(payload)}")
    return Frame(kind, payload)


def error_frame(reason: str) -> bytes:
    return frame_encode(MessageKind.ERROR, reason.encode("utf-8"))


def frame_length(header: bytes) -> int:
    """Payload length declared by a frame header."""
    return _HEADER.unpack_from(header, 0)[0]


def symbol_count(kind: MessageKind, payload: bytes) -> int:
    """Field symbols carried by a payload; requests without symbols count 0."""
    try:
        if kind in (MessageKind.SHARE_RESP, MessageKind.UPLOAD_SHARE):
            return _U32.unpack_from(payload, _SHARE_COUNT_OFFSET)[0]
        if kind == MessageKind.PIR_ANSWER:
            return _U32.unpack_from(payload, 4)[0]
        if kind == MessageKind.NAIVE_RESP:
            return _U32.unpack_from(payload, 0)[0]
        if kind in (MessageKind.UPLOAD_COMBOS, MessageKind.NAIVE_PUSH):
            r, s = _BUNDLE_HEADER.unpack_from(payload, 0)
            return r * s
    except struct.error as exc:
        raise FrameError(f"{kind.name} payload too short ({len(payload)} bytes)") from exc
    return 0


# =============================================================================
# CONTABILIDADE
# =============================================================================
@dataclass(frozen=True)
class TranscriptEntry:
    direction: str  # "request" | "response"
    kind: MessageKind
    payload: bytes


class Accounting:
    """Per-database, per-direction byte and symbol counters (thread-safe)."""

    def __init__(self):
        self._lock = threading.Lock()
        self.ledger = OverheadLedger()
        self.bytes: Dict[Tuple[int, str], int] = {}
        self.symbols: Dict[Tuple[int, str], int] = {}

    def count(self, db_index: int, direction: str, frame_bytes: int, kind: MessageKind, n: int):
        with self._lock:
            key = (db_index, direction)
            self.bytes[key] = self.bytes.get(key, 0) + frame_bytes
            self.symbols[key] = self.symbols.get(key, 0) + n
            phase = LEDGER_PHASE.get(kind)
            if phase is not None:
                self.ledger.record(db_index, phase, n)

    def snapshot(self) -> OverheadLedger:
        with self._lock:
            return self.ledger.copy()


# =============================================================================
# CANAL
# =============================================================================
class Channel:
    """Request-response carrier to N isolated databases.

    There is no route between databases: every frame goes from the local
    machine to exactly one database and back.
    """

    def __init__(self, n_dbs: int):
        self.n_dbs = n_dbs
        self.accounting = Accounting()
        self.transcripts: Dict[int, List[TranscriptEntry]] = {i: [] for i in range(1, n_dbs + 1)}
        self._transcript_lock = threading.Lock()

    def _deliver(self, db_index: int, frame: bytes) -> bytes:
        raise NotImplementedError

    @contextmanager
    def session(self):
        yield self

    def channel_send(self, db_index: int, kind: MessageKind, payload: bytes = b"") -> Frame:
        if not 1 <= db_index <= self.n_dbs:
            raise TransportError(f"database index {db_index} outside [1, {self.n_dbs}]")
        request = frame_encode(kind, payload)
        self._record(db_index, "request", kind, payload, len(request))
        raw = self._deliver(db_index, request)
        response = frame_decode(raw)
        self._record(db_index, "response", response.kind, response.payload, len(raw))
        if response.kind == MessageKind.ERROR:
            raise RemoteError(db_index, response.payload.decode("utf-8", "replace"))
        expected = RESPONSE_KIND[kind]
        if response.kind != expected:
            raise TransportError(
                f"database {db_index} answered {response.kind.name} to {kind.name}, "
                f"expected {expected.name}"
            )
        return response

    def send_all(
        self, requests: Mapping[int, Tuple[MessageKind, bytes]]
    ) -> Dict[int, Frame]:
        """One request per database, issued concurrently."""
        with ThreadPoolExecutor(max_workers=max(1, len(requests))) as pool:
            futures = {
                db: pool.submit(self.channel_send, db, kind, payload)
                for db, (kind, payload) in requests.items()
            }
            return {db: f.result() for db, f in futures.items()}

    def _record(self, db_index, direction, kind, payload, frame_bytes):
        n = symbol_count(kind, payload) if kind != MessageKind.ERROR else 0
        self.accounting.count(db_index, direction, frame_bytes, kind, n)
        with self._transcript_lock:
            self.transcripts[db_index].append(TranscriptEntry(direction, kind, payload))


class SimulatedChannel(Channel):
    """In-process carrier: frames are handed to database objects directly."""

    def __init__(self, handlers: Sequence[Callable[[bytes], bytes]]):
        super().__init__(len(handlers))
        self._handlers = list(handlers)

    def _deliver(self, db_index: int, frame: bytes) -> bytes:
        return self._handlers[db_index - 1](frame)
