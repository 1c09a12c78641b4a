"""
Seeded end-to-end simulation with a plaintext reference.

The ReferenceModel trains B_t in the clear with its own trainer instance.
After every protocol iteration the harness checks that all databases hold
the same B~_t and that de-masking B~_t with the oracle's M_{t-1} gives
exactly the reference matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from audit.ledger import NAIVE, PROPOSED, OverheadLedger
from mdscode.mdscode import join_shares, mds_decode
from naive.naive import NaiveConfig, NaiveDatabase, naive_bootstrap, naive_iteration
from protocol.database import DatabaseServer
from protocol.machine import IterationResult, LocalMachine
from protocol.protocol import (
    IterMessage,
    OracleState,
    ParamMatrix,
    ProtocolConfig,
    Variant,
    bootstrap,
    demask,
    random_params,
)
from protocol.trainer import PSEUDORANDOM, TrainerOracle
from transport.transport import Channel, SimulatedChannel

logger = logging.getLogger(__name__)

_SCHEDULE_SALT = 0xD5C4ED


class SimulationError(AssertionError):
    """A correctness invariant failed during a simulation."""


class ReferenceModel:
    """No-privacy simulator: B_{t+1,d} = trainer(B_{t,d}), other rows untouched."""

    def __init__(self, initial: ParamMatrix, trainer: TrainerOracle):
        self.plain = [tuple(row) for row in initial]
        self.trainer = trainer

    def step(self, d: int, iteration: int):
        self.plain[d - 1] = self.trainer(self.plain[d - 1], iteration)

    def step_all(self, iteration: int):
        self.plain = [self.trainer(row, iteration) for row in self.plain]

    @property
    def matrix(self) -> ParamMatrix:
        return tuple(self.plain)


@dataclass
class SimulationReport:
    scheme: str
    schedule: List[int] = field(default_factory=list)
    iterations: List[OverheadLedger] = field(default_factory=list)
    total: OverheadLedger = field(default_factory=OverheadLedger)


def seeded_schedule(seed: int, r: int, T: int) -> List[int]:
    rng = np.random.default_rng([seed & (2**64 - 1), _SCHEDULE_SALT])
    return [int(x) for x in rng.integers(1, r + 1, size=T)]


class Simulation:
    def __init__(
        self,
        cfg: ProtocolConfig,
        seed: int,
        scheme: str = PROPOSED,
        trainer_kind: str = PSEUDORANDOM,
        variant: Variant = Variant.HONEST,
        initial: Optional[ParamMatrix] = None,
        channel_factory: Optional[Callable[[Sequence[Callable]], Channel]] = None,
        check: bool = True,
    ):
        self.cfg = cfg
        self.seed = seed
        self.scheme = scheme
        # broken variants violate the masking algebra; only the views matter there
        self.check = check and variant == Variant.HONEST
        self.initial = initial if initial is not None else random_params(cfg, seed)
        self.trainer = TrainerOracle(trainer_kind, seed, cfg.modulus)
        self.reference = ReferenceModel(self.initial, TrainerOracle(trainer_kind, seed, cfg.modulus))
        make_channel = channel_factory or SimulatedChannel

        if scheme == PROPOSED:
            states, oracle = bootstrap(cfg, self.initial)
            self.databases = [DatabaseServer(cfg, st) for st in states]
            self.channel = make_channel([db.handle for db in self.databases])
            self.machine = LocalMachine(
                cfg, self.channel, self.trainer, np.random.default_rng(seed & (2**64 - 1)), variant
            )
            self.oracle: OracleState = oracle
            self.messages: List[IterMessage] = [oracle.message]
        elif scheme == NAIVE:
            self.naive_cfg = (
                cfg if isinstance(cfg, NaiveConfig)
                else NaiveConfig(cfg.n_dbs, cfg.n_submodels, cfg.submodel_len, cfg.modulus)
            )
            states = naive_bootstrap(self.naive_cfg, self.initial)
            self.databases = [NaiveDatabase(self.naive_cfg, i + 1, st) for i, st in enumerate(states)]
            self.channel = make_channel([db.handle for db in self.databases])
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        self.iteration = 1

    # -------------------------------------------------------------------------
    def oracle_message(self) -> IterMessage:
        """M_{t-1} as only an observer of every database could rebuild it."""
        shares = [db.state.share for db in self.databases]
        codeword = join_shares(shares, self.cfg.n_dbs)
        return IterMessage.from_vector(mds_decode(codeword, self.cfg.mixing), self.cfg.n_submodels)

    def demasked(self) -> ParamMatrix:
        return demask(self.databases[0].state.encoded, self.oracle_message())

    def check_replication(self):
        if self.scheme == PROPOSED:
            first = self.databases[0].state.encoded
            same = all(db.state.encoded == first for db in self.databases)
        else:
            first = self.databases[0].state
            same = all(db.state == first for db in self.databases)
        if not same:
            raise SimulationError(f"databases diverged at iteration {self.iteration}")

    def check_oracle(self):
        if self.scheme == PROPOSED:
            if self.oracle_message() != self.oracle.message:
                raise SimulationError(f"shares do not decode to the uploaded message at iteration {self.iteration}")
            state = self.demasked()
            expected = self.oracle.plain
        else:
            state = self.databases[0].state.plain
            expected = self.reference.matrix
        if state != expected:
            raise SimulationError(
                f"de-masked state differs from the plaintext reference at iteration {self.iteration}"
            )

    # -------------------------------------------------------------------------
    def step(self, d: int) -> OverheadLedger:
        t = self.iteration
        if self.scheme == PROPOSED:
            result: IterationResult = self.machine.run_iteration(d)
            self.messages.append(result.message)
            ledger = result.ledger
            self.reference.step(d, t)
            self.oracle = OracleState(self.reference.matrix, result.message, t + 1)
        else:
            ledger = naive_iteration(d, self.naive_cfg, self.channel, self.trainer, t)
            self.reference.step_all(t)
        self.iteration += 1
        if self.check:
            self.check_replication()
            self.check_oracle()
        return ledger

    def run(self, T: int, schedule: Optional[Sequence[int]] = None) -> SimulationReport:
        schedule = list(schedule) if schedule is not None else seeded_schedule(self.seed, self.cfg.n_submodels, T)
        if len(schedule) != T:
            raise ValueError(f"schedule has {len(schedule)} entries for T={T}")
        report = SimulationReport(self.scheme, schedule)
        for d in schedule:
            ledger = self.step(d)
            report.iterations.append(ledger)
            report.total.merge(ledger)
        logger.info("simulation done: T=%d scheme=%s overall=%d", T, self.scheme, report.total.overall)
        return report
