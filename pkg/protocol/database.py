"""
Database side of the protocol: one object per DB_i, answering frames.

A database only ever sees the frames addressed to it. It keeps its own
received log and state snapshots so the auditor can rebuild exactly what
this single database observed.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

from field.field import FieldError
from mdscode.mdscode import ExclusiveShare, MdsError, decode_share, encode_share
from pir.pir import PirError, PirIndexError, decode_query, encode_answer, pir_answer
from protocol.protocol import (
    DatabaseState,
    ProtocolConfig,
    ProtocolError,
    db_apply_upload,
    decode_bundle,
)
from transport.transport import FrameError, MessageKind, error_frame, frame_decode, frame_encode

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReceivedFrame:
    iteration: int
    kind: MessageKind
    payload: bytes


class FrameServer:
    """Decode a frame, dispatch on its kind, and never raise across the wire."""

    handled_errors = (ProtocolError, MdsError, PirError, FieldError)

    def __init__(self, db_index: int):
        self.db_index = db_index
        self.received: List[ReceivedFrame] = []
        self._lock = threading.Lock()

    @property
    def iteration(self) -> int:
        raise NotImplementedError

    def handlers(self) -> Dict[MessageKind, Callable[[bytes], bytes]]:
        raise NotImplementedError

    def handle(self, data: bytes) -> bytes:
        with self._lock:
            try:
                frame = frame_decode(data)
            except FrameError as exc:
                logger.warning("DB %d: bad frame: %s", self.db_index, exc)
                return error_frame(str(exc))
            self.received.append(ReceivedFrame(self.iteration, frame.kind, frame.payload))
            handler = self.handlers().get(frame.kind)
            if handler is None:
                return error_frame(f"unsupported request {frame.kind.name}")
            try:
                return handler(frame.payload)
            except self.handled_errors as exc:
                logger.warning("DB %d: %s rejected: %s", self.db_index, frame.kind.name, exc)
                return error_frame(str(exc))

    def received_at(self, iteration: int, kind: MessageKind) -> List[bytes]:
        return [r.payload for r in self.received if r.iteration == iteration and r.kind == kind]


class DatabaseServer(FrameServer):
    """DB_i holding (B~_t, c_{t-1,i}).

    UploadShare only stages the new share; UploadCombos commits rows and
    share together, so a database is either fully at t or fully at t+1.
    """

    def __init__(self, cfg: ProtocolConfig, state: DatabaseState):
        super().__init__(state.db_index)
        self.cfg = cfg
        self.state = state
        self.history: List[DatabaseState] = [state]
        self._staged: Optional[ExclusiveShare] = None

    @property
    def iteration(self) -> int:
        return self.state.encoded.iteration

    def handlers(self):
        return {
            MessageKind.GET_SHARE: self.on_get_share,
            MessageKind.PIR_QUERY: self.on_pir_query,
            MessageKind.UPLOAD_SHARE: self.on_upload_share,
            MessageKind.UPLOAD_COMBOS: self.on_upload_combos,
        }

    def on_get_share(self, payload: bytes) -> bytes:
        # a new download starts a new session; anything staged earlier is stale
        self._staged = None
        return frame_encode(MessageKind.SHARE_RESP, encode_share(self.state.share))

    def on_pir_query(self, payload: bytes) -> bytes:
        group, specs = decode_query(payload)
        pcfg = self.cfg.pir_config()
        if group >= pcfg.repetitions:
            raise PirIndexError(f"group {group} out of range [0, {pcfg.repetitions})")
        L = pcfg.subpacket_len
        store = [row[group * L : (group + 1) * L] for row in self.state.encoded.rows]
        answers = pir_answer(specs, store)
        return frame_encode(MessageKind.PIR_ANSWER, encode_answer(group, answers))

    def on_upload_share(self, payload: bytes) -> bytes:
        share = decode_share(payload, self.cfg.modulus)
        if share.db_index != self.db_index:
            raise ProtocolError(f"share for database {share.db_index} sent to database {self.db_index}")
        if share.iteration != self.iteration:
            raise ProtocolError(f"share labelled iteration {share.iteration}, database is at {self.iteration}")
        self._staged = share
        return frame_encode(MessageKind.ACK)

    def on_upload_combos(self, payload: bytes) -> bytes:
        if self._staged is None:
            raise ProtocolError("upload combos without a staged share")
        bundle = decode_bundle(payload, self.cfg.modulus)
        self.state = db_apply_upload(self.state, bundle, self._staged)
        self.history.append(self.state)
        self._staged = None
        logger.debug("DB %d committed iteration %d", self.db_index, self.iteration - 1)
        return frame_encode(MessageKind.ACK)
