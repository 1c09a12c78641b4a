"""
Baseline: download the whole model, train every submodel, upload everything.

Each database holds the plaintext B_t; nothing the machine sends depends on
the submodel it actually cares about.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from typing import List

from audit.ledger import OverheadLedger
from field.field import FieldModulus, decode_vector, encode_vector, vec_add, vec_sub
from mdscode.mdscode import share_bounds
from protocol.database import FrameServer
from protocol.protocol import (
    ConfigError,
    ParamMatrix,
    ProtocolError,
    UploadBundle,
    Violation,
    decode_bundle,
    encode_bundle,
)
from protocol.trainer import TrainerOracle
from transport.transport import Channel, MessageKind, frame_encode

logger = logging.getLogger(__name__)

_RANGE = struct.Struct("!II")
_COUNT = struct.Struct("!I")


@dataclass(frozen=True)
class NaiveConfig:
    n_dbs: int
    n_submodels: int
    submodel_len: int
    modulus: FieldModulus

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ConfigError(problems)

    def violations(self) -> List[Violation]:
        out = []
        if self.n_dbs < 1:
            out.append(Violation("RANGE", f"N={self.n_dbs}: need at least one database"))
        if self.n_submodels < 1 or self.submodel_len < 1:
            out.append(Violation("RANGE", "r and s must be positive"))
        return out

    def check_index(self, d: int):
        if not 1 <= d <= self.n_submodels:
            raise ProtocolError(f"submodel index d={d} outside [1, {self.n_submodels}]")


@dataclass(frozen=True)
class NaiveState:
    plain: ParamMatrix
    iteration: int = 1


def encode_range(offset: int, count: int) -> bytes:
    return _RANGE.pack(offset, count)


class NaiveDatabase(FrameServer):
    def __init__(self, cfg: NaiveConfig, db_index: int, state: NaiveState):
        super().__init__(db_index)
        self.cfg = cfg
        self.state = state
        self.history: List[NaiveState] = [state]

    @property
    def iteration(self) -> int:
        return self.state.iteration

    def handlers(self):
        return {MessageKind.NAIVE_GET: self.on_get, MessageKind.NAIVE_PUSH: self.on_push}

    def on_get(self, payload: bytes) -> bytes:
        if len(payload) != _RANGE.size:
            raise ProtocolError("malformed naive range request")
        offset, count = _RANGE.unpack(payload)
        flat = [x for row in self.state.plain for x in row]
        if offset + count > len(flat):
            raise ProtocolError(f"range [{offset}, {offset + count}) beyond {len(flat)} symbols")
        body = flat[offset : offset + count]
        return frame_encode(MessageKind.NAIVE_RESP, _COUNT.pack(count) + encode_vector(body))

    def on_push(self, payload: bytes) -> bytes:
        update = decode_bundle(payload, self.cfg.modulus)
        r, s = self.cfg.n_submodels, self.cfg.submodel_len
        if len(update.combos) != r or any(len(row) != s for row in update.combos):
            raise ProtocolError(f"naive update must be {r} x {s}")
        rows = tuple(vec_add(row, u) for row, u in zip(self.state.plain, update.combos))
        self.state = NaiveState(rows, self.state.iteration + 1)
        self.history.append(self.state)
        return frame_encode(MessageKind.ACK)


def naive_bootstrap(cfg: NaiveConfig, initial_params: ParamMatrix) -> List[NaiveState]:
    state = NaiveState(tuple(tuple(row) for row in initial_params))
    return [state for _ in range(cfg.n_dbs)]


def naive_iteration(
    d: int, cfg: NaiveConfig, channel: Channel, trainer: TrainerOracle, iteration: int
) -> OverheadLedger:
    """Download rs symbols (rs/N per database), r trainer calls, push r x s to every database."""
    cfg.check_index(d)
    r, s = cfg.n_submodels, cfg.submodel_len
    before = channel.accounting.snapshot()
    calls_before = trainer.calls
    dbs = range(1, cfg.n_dbs + 1)
    bounds = share_bounds(r * s, cfg.n_dbs, balanced=True)

    with channel.session():
        responses = channel.send_all(
            {i: (MessageKind.NAIVE_GET, encode_range(a, b - a)) for i, (a, b) in zip(dbs, bounds)}
        )
        flat = []
        for i, (a, b) in zip(dbs, bounds):
            payload = responses[i].payload
            (count,) = _COUNT.unpack_from(payload, 0)
            if count != b - a:
                raise ProtocolError(f"database {i} returned {count} symbols, asked {b - a}")
            flat.extend(decode_vector(payload[_COUNT.size :], cfg.modulus, count))
        plain = [tuple(flat[l * s : (l + 1) * s]) for l in range(r)]

        # every row is trained, the wanted one included
        update = UploadBundle(tuple(vec_sub(trainer(row, iteration), row) for row in plain))
        payload = encode_bundle(update)
        channel.send_all({i: (MessageKind.NAIVE_PUSH, payload) for i in dbs})

    ledger = channel.accounting.snapshot().since(before)
    ledger.trainer_calls = trainer.calls - calls_before
    ledger.iterations = 1
    logger.info("naive iteration %d: d=%d overall=%d", iteration, d, ledger.overall)
    return ledger
