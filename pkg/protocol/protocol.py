"""
Private submodel learning: the masked parameter matrix, the iteration message
M_t = (alpha_t, delta_t) and the update algebra shared by databases and local
machines.

Row l of the stored matrix at iteration t carries the mask of the previous
machine:  B~_{t,l} = B_{t-1,l} + alpha_{t-1,l} * delta_{t-1},  with
alpha_{t-1,p} = 1 at the row p that machine actually trained. Submodel and
database indices are 1-based.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np
from sympy import isprime

from field.field import (
    DEFAULT_MODULUS,
    FieldModulus,
    Vector,
    decode_vector,
    encode_vector,
    vec_add,
    vec_scale,
    vec_sub,
)
from mdscode.mdscode import (
    AUTO,
    DENSE,
    VANDERMONDE,
    ExclusiveShare,
    MixingMatrix,
    default_mixing_matrix,
    mds_encode,
    split_shares,
)
from pir.pir import PirConfig

logger = logging.getLogger(__name__)

_BUNDLE_HEADER = struct.Struct("!HI")

ParamMatrix = Tuple[Vector, ...]


# =============================================================================
# ERROS
# =============================================================================
@dataclass(frozen=True)
class Violation:
    category: str
    message: str

    def __str__(self):
        return f"[{self.category}] {self.message}"


class ConfigError(ValueError):
    """One or more configuration constraints are violated."""

    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class ProtocolError(ValueError):
    """A protocol message or state transition is invalid."""


class MalformedMessageError(ProtocolError):
    """The coefficient vector does not mark exactly one chosen row."""


class IterationAborted(RuntimeError):
    """An iteration failed.

    Failures in the download, update and upload phases leave every database
    unchanged. A failure in the commit phase can leave some databases updated.
    """

    def __init__(self, phase: str, cause: Exception):
        super().__init__(f"iteration aborted in {phase} phase: {cause}")
        self.phase = phase
        self.cause = cause


class Variant(Enum):
    """Honest machine, plus the deliberately broken negative controls."""

    HONEST = "honest"
    UNMASKED_UPLOAD = "unmasked-upload"
    CONSTANT_ALPHA = "constant-alpha"


# =============================================================================
# CONFIGURAÇÃO
# =============================================================================
def protocol_violations(
    n_dbs: int,
    r: int,
    s: int,
    q: int,
    mixing_kind: str = VANDERMONDE,
    balanced_shares: bool = False,
) -> List[Violation]:
    out = []
    if n_dbs < 2:
        out.append(Violation("RANGE", f"N={n_dbs}: need at least 2 databases"))
    if r < 1:
        out.append(Violation("RANGE", f"r={r}: need at least one submodel"))
    if s < 1:
        out.append(Violation("RANGE", f"s={s}: submodels need at least one parameter"))
    if q < 2 or not isprime(q):
        out.append(Violation("FIELD", f"q={q} is not prime"))
    elif q < r + 1:
        out.append(
            Violation("FIELD", f"q={q} cannot supply {r} distinct nonzero coefficients (need q >= r+1)")
        )
    if mixing_kind == VANDERMONDE and q <= r + s:
        out.append(Violation("FIELD", f"q={q} must exceed r+s={r + s} for the Vandermonde mixing matrix"))
    if mixing_kind not in (VANDERMONDE, DENSE, AUTO):
        out.append(Violation("FIELD", f"unknown mixing kind {mixing_kind!r}"))
    if n_dbs >= 2 and r >= 1 and s >= 1:
        if s % (n_dbs**r):
            out.append(
                Violation("DIVISIBILITY", f"s={s} must be a multiple of N^r={n_dbs**r}")
            )
        if (r + s) % n_dbs and not balanced_shares:
            out.append(
                Violation("DIVISIBILITY", f"N={n_dbs} must divide r+s={r + s}")
            )
    return out


@dataclass(frozen=True, eq=False)
class ProtocolConfig:
    n_dbs: int
    n_submodels: int
    submodel_len: int
    modulus: FieldModulus
    mixing: MixingMatrix
    balanced_shares: bool = False

    def __post_init__(self):
        violations = protocol_violations(
            self.n_dbs, self.n_submodels, self.submodel_len, self.modulus.q,
            self.mixing.kind, self.balanced_shares,
        )
        if self.mixing.n != self.message_len:
            violations.append(
                Violation("FIELD", f"mixing matrix has dimension {self.mixing.n}, need r+s={self.message_len}")
            )
        if self.mixing.modulus.q != self.modulus.q:
            violations.append(Violation("FIELD", "mixing matrix is over a different field"))
        if violations:
            raise ConfigError(violations)

    @classmethod
    def build(
        cls,
        n_dbs: int,
        r: int,
        s: int,
        q: int = DEFAULT_MODULUS,
        mixing_kind: str = VANDERMONDE,
        balanced_shares: bool = False,
    ) -> "ProtocolConfig":
        violations = protocol_violations(n_dbs, r, s, q, mixing_kind, balanced_shares)
        if violations:
            raise ConfigError(violations)
        modulus = FieldModulus(q)
        mixing = default_mixing_matrix(r + s, modulus, mixing_kind)
        return cls(n_dbs, r, s, modulus, mixing, balanced_shares)

    violations = staticmethod(protocol_violations)

    @property
    def message_len(self) -> int:
        return self.n_submodels + self.submodel_len

    def pir_config(self) -> PirConfig:
        return PirConfig(self.n_dbs, self.n_submodels, self.submodel_len)

    def check_index(self, d: int):
        if not 1 <= d <= self.n_submodels:
            raise ProtocolError(f"submodel index d={d} outside [1, {self.n_submodels}]")


# =============================================================================
# TIPOS DO PROTOCOLO
# =============================================================================
@dataclass(frozen=True)
class IterMessage:
    alpha: Vector
    delta: Vector

    @property
    def chosen_index(self) -> int:
        """The unique 1-based row whose coefficient is 1."""
        ones = [l for l, a in enumerate(self.alpha, start=1) if a.value == 1]
        if len(ones) != 1:
            raise MalformedMessageError(
                f"malformed previous message: {len(ones)} coefficients equal 1"
            )
        return ones[0]

    def as_vector(self) -> Vector:
        return tuple(self.alpha) + tuple(self.delta)

    @classmethod
    def from_vector(cls, v: Sequence, r: int) -> "IterMessage":
        return cls(tuple(v[:r]), tuple(v[r:]))


@dataclass(frozen=True)
class EncodedMatrix:
    rows: ParamMatrix
    iteration: int


@dataclass(frozen=True)
class UploadBundle:
    combos: ParamMatrix


@dataclass(frozen=True)
class DatabaseState:
    db_index: int
    encoded: EncodedMatrix
    share: ExclusiveShare


@dataclass(frozen=True)
class OracleState:
    """What only the simulation oracle knows: plaintext B_t and M_{t-1}."""

    plain: ParamMatrix
    message: IterMessage
    iteration: int


def random_params(cfg, seed: int) -> ParamMatrix:
    rng = np.random.default_rng([seed & (2**64 - 1), 0x5EED])
    values = rng.integers(0, cfg.modulus.q, size=(cfg.n_submodels, cfg.submodel_len))
    return tuple(cfg.modulus.vector(int(x) for x in row) for row in values)


def initial_alpha(cfg: ProtocolConfig) -> Vector:
    return cfg.modulus.vector(range(1, cfg.n_submodels + 1))


# =============================================================================
# OPERAÇÕES
# =============================================================================
def bootstrap(cfg: ProtocolConfig, initial_params: ParamMatrix) -> Tuple[List[DatabaseState], OracleState]:
    """Iteration 1 state: delta_0 = 0, so B~_1 = B_0 and no row is masked yet."""
    if len(initial_params) != cfg.n_submodels or any(
        len(row) != cfg.submodel_len for row in initial_params
    ):
        raise ProtocolError(
            f"initial parameters must be {cfg.n_submodels} x {cfg.submodel_len}"
        )
    message = IterMessage(initial_alpha(cfg), cfg.modulus.zeros(cfg.submodel_len))
    codeword = mds_encode(message.as_vector(), cfg.mixing)
    shares = split_shares(codeword, cfg.n_dbs, iteration=0, balanced=cfg.balanced_shares)
    encoded = EncodedMatrix(tuple(tuple(row) for row in initial_params), iteration=1)
    states = [DatabaseState(i + 1, encoded, shares[i]) for i in range(cfg.n_dbs)]
    logger.info("bootstrap: N=%d r=%d s=%d q=%d", cfg.n_dbs, cfg.n_submodels, cfg.submodel_len, cfg.modulus.q)
    return states, OracleState(encoded.rows, message, 1)


def recover_plain(b_tilde_d: Vector, m_prev: IterMessage, d: int) -> Vector:
    """B_{t,d} from the masked row; the true update only ever lands on row p."""
    coefficient = m_prev.alpha[d - 1]
    if coefficient.value == 1:
        return tuple(b_tilde_d)
    return vec_sub(b_tilde_d, vec_scale(coefficient, m_prev.delta))


def make_message(d: int, delta: Vector, cfg: ProtocolConfig, rng, variant: Variant = Variant.HONEST) -> IterMessage:
    """alpha_d = 1; the other r-1 coefficients distinct, uniform over F_q minus {0, 1}."""
    cfg.check_index(d)
    if len(delta) != cfg.submodel_len:
        raise ProtocolError(f"delta has {len(delta)} symbols, expected {cfg.submodel_len}")
    r, q = cfg.n_submodels, cfg.modulus.q
    if variant == Variant.CONSTANT_ALPHA:
        others = [0] * (r - 1)
    else:
        others = [int(x) for x in rng.choice(np.arange(2, q), size=r - 1, replace=False)]
    values = others[: d - 1] + [1] + others[d - 1 :]
    return IterMessage(cfg.modulus.vector(values), tuple(delta))


def compute_upload(m_t: IterMessage, m_prev: IterMessage, variant: Variant = Variant.HONEST) -> UploadBundle:
    """U_{t,l} = a_{t,l} D_t - a_{t-1,l} D_{t-1} for l != p, and U_{t,p} = a_{t,p} D_t."""
    p = m_prev.chosen_index
    if variant == Variant.UNMASKED_UPLOAD:
        d = m_t.chosen_index
        zero = tuple(x - x for x in m_t.delta)
        return UploadBundle(
            tuple(tuple(m_t.delta) if l == d else zero for l in range(1, len(m_t.alpha) + 1))
        )
    combos = []
    for l, (a_t, a_prev) in enumerate(zip(m_t.alpha, m_prev.alpha), start=1):
        row = vec_scale(a_t, m_t.delta)
        if l != p:
            row = vec_sub(row, vec_scale(a_prev, m_prev.delta))
        combos.append(row)
    return UploadBundle(tuple(combos))


def check_bundle(bundle: UploadBundle, r: int, s: int):
    if len(bundle.combos) != r or any(len(row) != s for row in bundle.combos):
        raise ProtocolError(f"upload bundle must be {r} x {s}")


def db_apply_upload(db: DatabaseState, bundle: UploadBundle, new_share: ExclusiveShare) -> DatabaseState:
    """B~_{t+1,l} = B~_{t,l} + U_{t,l}, and c_{t-1,i} is replaced by c_{t,i}.

    Returns a new state; the input state is never modified.
    """
    rows = db.encoded.rows
    check_bundle(bundle, len(rows), len(rows[0]) if rows else 0)
    if new_share.db_index != db.db_index:
        raise ProtocolError(
            f"share for database {new_share.db_index} sent to database {db.db_index}"
        )
    if new_share.iteration != db.encoded.iteration:
        raise ProtocolError(
            f"share labelled iteration {new_share.iteration}, database is at {db.encoded.iteration}"
        )
    if len(new_share.symbols) != len(db.share.symbols):
        raise ProtocolError(
            f"share carries {len(new_share.symbols)} symbols, expected {len(db.share.symbols)}"
        )
    new_rows = tuple(vec_add(row, u) for row, u in zip(rows, bundle.combos))
    return DatabaseState(db.db_index, EncodedMatrix(new_rows, db.encoded.iteration + 1), new_share)


def demask(encoded: EncodedMatrix, m_prev: IterMessage) -> ParamMatrix:
    """Plaintext B_t from B~_t given M_{t-1} (oracle-side)."""
    p = m_prev.chosen_index
    out = []
    for l, row in enumerate(encoded.rows, start=1):
        plain = vec_sub(row, vec_scale(m_prev.alpha[l - 1], m_prev.delta))
        if l == p:
            plain = vec_add(plain, m_prev.delta)
        out.append(plain)
    return tuple(out)


# =============================================================================
# FORMATO DE FIO: r (2) | s (4) | r*s elementos, linha a linha
# =============================================================================
def encode_bundle(bundle: UploadBundle) -> bytes:
    r = len(bundle.combos)
    s = len(bundle.combos[0]) if r else 0
    return _BUNDLE_HEADER.pack(r, s) + b"".join(encode_vector(row) for row in bundle.combos)


def decode_bundle(data: bytes, modulus: FieldModulus) -> UploadBundle:
    if len(data) < _BUNDLE_HEADER.size:
        raise ProtocolError("truncated upload bundle")
    r, s = _BUNDLE_HEADER.unpack_from(data, 0)
    body = data[_BUNDLE_HEADER.size :]
    flat = decode_vector(body, modulus, r * s)
    return UploadBundle(tuple(tuple(flat[i * s : (i + 1) * s]) for i in range(r)))
