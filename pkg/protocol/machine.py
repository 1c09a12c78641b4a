"""
Local machine L_t: one three-phase iteration (download, update, upload).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from audit.ledger import OverheadLedger
from field.field import FieldError, Vector, vec_sub
from mdscode.mdscode import (
    MdsError,
    OpCounter,
    decode_share,
    encode_share,
    join_shares,
    mds_decode,
    mds_encode,
    split_shares,
)
from pir.pir import PirError, decode_answer, encode_query, pir_decode, pir_generate_queries
from protocol.protocol import (
    IterMessage,
    IterationAborted,
    ProtocolConfig,
    ProtocolError,
    Variant,
    check_bundle,
    compute_upload,
    encode_bundle,
    make_message,
    recover_plain,
)
from protocol.trainer import TrainerOracle
from transport.transport import Channel, MessageKind, TransportError

logger = logging.getLogger(__name__)

_ABORTABLE = (ProtocolError, MdsError, PirError, FieldError, TransportError)


@dataclass(frozen=True)
class DownloadResult:
    b_tilde: Vector
    m_prev: IterMessage
    iteration: int


@dataclass(frozen=True)
class IterationResult:
    iteration: int
    chosen: int
    message: IterMessage
    ledger: OverheadLedger


class LocalMachine:
    """Runs iterations against N databases reachable only through `channel`.

    The machine keeps no state between iterations: t and M_{t-1} are
    recovered from the shares every time.
    """

    def __init__(
        self,
        cfg: ProtocolConfig,
        channel: Channel,
        trainer: TrainerOracle,
        rng,
        variant: Variant = Variant.HONEST,
    ):
        self.cfg = cfg
        self.channel = channel
        self.trainer = trainer
        self.rng = rng
        self.variant = variant
        self.counter = OpCounter()

    def lm_download(self, d: int) -> DownloadResult:
        cfg = self.cfg
        cfg.check_index(d)
        dbs = range(1, cfg.n_dbs + 1)

        # Step 1: exclusive shares -> M_{t-1}
        frames = self.channel.send_all({i: (MessageKind.GET_SHARE, b"") for i in dbs})
        shares = []
        for i in dbs:
            share = decode_share(frames[i].payload, cfg.modulus)
            if share.db_index != i:
                raise ProtocolError(f"database {i} returned the share of database {share.db_index}")
            shares.append(share)
        codeword = join_shares(shares, cfg.n_dbs)
        m_prev = IterMessage.from_vector(mds_decode(codeword, cfg.mixing, self.counter), cfg.n_submodels)
        t = shares[0].iteration + 1

        # Step 2: PIR for B~_{t,d}, one independent query set per subpacket group
        pcfg = cfg.pir_config()
        row = []
        for group in range(pcfg.repetitions):
            plan = pir_generate_queries(d - 1, pcfg, self.rng)
            responses = self.channel.send_all(
                {i: (MessageKind.PIR_QUERY, encode_query(group, plan.per_db[i - 1])) for i in dbs}
            )
            answers = []
            for i in dbs:
                got_group, values = decode_answer(responses[i].payload, cfg.modulus)
                if got_group != group:
                    raise ProtocolError(f"database {i} answered group {got_group}, asked {group}")
                answers.append(values)
            row.extend(pir_decode(answers, plan))
        return DownloadResult(tuple(row), m_prev, t)

    def run_iteration(self, d: int) -> IterationResult:
        cfg = self.cfg
        before = self.channel.accounting.snapshot()
        self.counter.reset()
        calls_before = self.trainer.calls
        dbs = range(1, cfg.n_dbs + 1)

        with self.channel.session():
            try:
                download = self.lm_download(d)
            except _ABORTABLE as exc:
                raise IterationAborted("download", exc) from exc

            try:
                plain = recover_plain(download.b_tilde, download.m_prev, d)
                trained = self.trainer(plain, download.iteration)
                delta = vec_sub(trained, plain)
                message = make_message(d, delta, cfg, self.rng, self.variant)
                codeword = mds_encode(message.as_vector(), cfg.mixing, self.counter)
                shares = split_shares(codeword, cfg.n_dbs, download.iteration, cfg.balanced_shares)
                bundle = compute_upload(message, download.m_prev, self.variant)
                check_bundle(bundle, cfg.n_submodels, cfg.submodel_len)
            except _ABORTABLE as exc:
                raise IterationAborted("update", exc) from exc

            # every share is staged before any database commits
            try:
                self.channel.send_all(
                    {i: (MessageKind.UPLOAD_SHARE, encode_share(shares[i - 1])) for i in dbs}
                )
            except _ABORTABLE as exc:
                raise IterationAborted("upload", exc) from exc

            # no rollback: databases that already acked keep the update
            try:
                self.channel.send_all({i: (MessageKind.UPLOAD_COMBOS, encode_bundle(bundle)) for i in dbs})
            except _ABORTABLE as exc:
                logger.error("iteration %d: commit failed, replicas may have diverged: %s", download.iteration, exc)
                raise IterationAborted("commit", exc) from exc

        ledger = self.channel.accounting.snapshot().since(before)
        ledger.trainer_calls = self.trainer.calls - calls_before
        ledger.encode_ops = self.counter.encode_ops
        ledger.decode_ops = self.counter.decode_ops
        ledger.encode_macs = self.counter.encode_macs
        ledger.decode_macs = self.counter.decode_macs
        ledger.iterations = 1
        logger.info(
            "iteration %d: d=%d download=%d upload=%d", download.iteration, d, ledger.download, ledger.upload
        )
        return IterationResult(download.iteration, d, message, ledger)
