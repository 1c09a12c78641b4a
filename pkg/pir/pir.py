"""
Capacity-achieving private information retrieval over N replicated,
non-colluding databases holding K messages of L = N^K symbols each.

Query structure, per database and per round k = 1..K:
  - for every k-subset S that contains the desired message: (N-1)^(k-1) sums,
    each one fresh desired symbol plus a (k-1)-sum over S minus {d} that
    another database answered in round k-1 (side information);
  - for every k-subset S without the desired message: (N-1)^(k-1) sums of
    fresh undesired symbols, later reused as side information.
Symbol indices of message m are taken in the order of a uniform permutation
pi_m of range(L), one permutation per message. Message and symbol indices
are 0-based.
"""

from __future__ import annotations

import logging
import struct
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

from field.field import FieldElement, FieldModulus, Vector, decode_vector, encode_vector

logger = logging.getLogger(__name__)

_GROUP = struct.Struct("!I")
_COUNT = struct.Struct("!I")
_TERM = struct.Struct("!HI")

Permutations = Tuple[Tuple[int, ...], ...]


# =============================================================================
# ERROS
# =============================================================================
class PirError(ValueError):
    """Base class for PIR failures."""


class PirConfigError(PirError):
    """Invalid (N, K, s) combination."""


class PirIndexError(PirError):
    """A query references a message or symbol outside the store."""


class PirDecodeError(PirError):
    """Answers cannot be combined into the desired message."""


# =============================================================================
# CONFIGURAÇÃO
# =============================================================================
@dataclass(frozen=True)
class PirConfig:
    n_dbs: int
    n_messages: int
    message_len: int

    def __post_init__(self):
        if self.n_dbs < 2:
            raise PirConfigError(f"PIR needs N >= 2 databases, got {self.n_dbs}")
        if self.n_messages < 1:
            raise PirConfigError(f"PIR needs K >= 1 messages, got {self.n_messages}")
        L = self.subpacket_len
        if self.message_len <= 0 or self.message_len % L:
            raise PirConfigError(
                f"s={self.message_len} must be a positive multiple of N^K={L}"
            )

    @property
    def subpacket_len(self) -> int:
        return self.n_dbs**self.n_messages

    @property
    def repetitions(self) -> int:
        return self.message_len // self.subpacket_len

    @property
    def beta(self) -> Fraction:
        return sum((Fraction(1, self.n_dbs**k) for k in range(1, self.n_messages)), Fraction(0))

    def sums_per_db(self) -> int:
        N, K = self.n_dbs, self.n_messages
        return (N**K - 1) // (N - 1)


def pir_download_count(cfg: PirConfig) -> int:
    """(1 + beta) * s, exact."""
    total = (1 + cfg.beta) * cfg.message_len
    assert total.denominator == 1
    return int(total)


# =============================================================================
# CONSULTAS
# =============================================================================
@dataclass(frozen=True)
class SumSpec:
    terms: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        messages = [m for m, _ in self.terms]
        if not messages:
            raise PirError("empty sum")
        if len(set(messages)) != len(messages):
            raise PirError(f"message repeated within a sum: {messages}")

    @property
    def k(self) -> int:
        return len(self.terms)

    @property
    def messages(self) -> frozenset:
        return frozenset(m for m, _ in self.terms)


@dataclass(frozen=True)
class Recovery:
    """Where one desired symbol comes from.

    `side` is the (db, position) of the side-information sum to subtract, or
    None for a desired singleton.
    """

    db: int
    position: int
    pre_index: int
    side: Optional[Tuple[int, int]]


@dataclass(frozen=True)
class DecodeState:
    desired: int
    permutations: Permutations
    recoveries: Tuple[Recovery, ...]


@dataclass(frozen=True)
class QueryPlan:
    per_db: Tuple[Tuple[SumSpec, ...], ...]
    decode_state: DecodeState

    @property
    def total_sums(self) -> int:
        return sum(len(specs) for specs in self.per_db)


def draw_permutations(cfg: PirConfig, rng) -> Permutations:
    """One independent uniform permutation of range(L) per message."""
    L = cfg.subpacket_len
    return tuple(tuple(int(x) for x in rng.permutation(L)) for _ in range(cfg.n_messages))


def build_query_plan(d: int, cfg: PirConfig, permutations: Permutations) -> QueryPlan:
    N, K, L = cfg.n_dbs, cfg.n_messages, cfg.subpacket_len
    if not 0 <= d < K:
        raise PirIndexError(f"desired message {d} out of range [0, {K})")
    if len(permutations) != K or any(sorted(p) != list(range(L)) for p in permutations):
        raise PirError(f"need {K} permutations of range({L})")

    per_db: List[List[SumSpec]] = [[] for _ in range(N)]
    side: Dict[Tuple[int, Tuple[int, ...]], List[int]] = {}
    recoveries: List[Recovery] = []
    desired_next = 0
    fresh_next = [0] * K

    for k in range(1, K + 1):
        for db in range(N):
            for subset in combinations(range(K), k):
                if d in subset:
                    rest = tuple(m for m in subset if m != d)
                    if k == 1:
                        sources = [None]
                    else:
                        sources = [
                            (other, pos)
                            for other in range(N)
                            if other != db
                            for pos in side[(other, rest)]
                        ]
                    for source in sources:
                        j = desired_next
                        desired_next += 1
                        terms = [(d, permutations[d][j])]
                        if source is not None:
                            terms.extend(per_db[source[0]][source[1]].terms)
                        per_db[db].append(SumSpec(tuple(sorted(terms))))
                        recoveries.append(Recovery(db, len(per_db[db]) - 1, j, source))
                else:
                    for _ in range((N - 1) ** (k - 1)):
                        terms = []
                        for m in subset:
                            terms.append((m, permutations[m][fresh_next[m]]))
                            fresh_next[m] += 1
                        per_db[db].append(SumSpec(tuple(terms)))
                        side.setdefault((db, subset), []).append(len(per_db[db]) - 1)

    # invariante: todos os L símbolos desejados aparecem exatamente uma vez
    assert desired_next == L, (desired_next, L)
    assert all(n <= L for n in fresh_next)
    plan = QueryPlan(
        tuple(tuple(specs) for specs in per_db),
        DecodeState(d, tuple(tuple(p) for p in permutations), tuple(recoveries)),
    )
    logger.debug("PIR plan N=%d K=%d d=%d: %d sums", N, K, d, plan.total_sums)
    return plan


def pir_generate_queries(d: int, cfg: PirConfig, rng) -> QueryPlan:
    return build_query_plan(d, cfg, draw_permutations(cfg, rng))


# =============================================================================
# RESPOSTA (lado do banco de dados)
# =============================================================================
def pir_answer(
    specs: Sequence[SumSpec], store: Sequence[Sequence[FieldElement]]
) -> List[FieldElement]:
    """F_q sum of the referenced symbols of `store` (K rows of L symbols)."""
    answers = []
    for spec in specs:
        acc = None
        for m, j in spec.terms:
            if not 0 <= m < len(store):
                raise PirIndexError(f"message index {m} out of range [0, {len(store)})")
            if not 0 <= j < len(store[m]):
                raise PirIndexError(f"symbol index {j} out of range [0, {len(store[m])})")
            acc = store[m][j] if acc is None else acc + store[m][j]
        answers.append(acc)
    return answers


# =============================================================================
# DECODIFICAÇÃO
# =============================================================================
def pir_decode(answers: Sequence[Sequence[FieldElement]], plan: QueryPlan) -> Vector:
    state = plan.decode_state
    if len(answers) != len(plan.per_db):
        raise PirDecodeError(
            f"PIR decode failure: {len(answers)} answer lists for {len(plan.per_db)} databases"
        )
    for db, (got, specs) in enumerate(zip(answers, plan.per_db)):
        if len(got) != len(specs):
            raise PirDecodeError(
                f"PIR decode failure: database {db + 1} returned {len(got)} answers, "
                f"expected {len(specs)}"
            )

    L = len(state.permutations[state.desired])
    out: List[Optional[FieldElement]] = [None] * L
    for rec in state.recoveries:
        value = answers[rec.db][rec.position]
        if rec.side is not None:
            side_db, side_pos = rec.side
            side_spec = plan.per_db[side_db][side_pos]
            own_spec = plan.per_db[rec.db][rec.position]
            if not set(side_spec.terms) <= set(own_spec.terms):
                raise PirDecodeError("PIR decode failure: side-information mismatch")
            value = value - answers[side_db][side_pos]
        index = state.permutations[state.desired][rec.pre_index]
        if out[index] is not None:
            raise PirDecodeError(f"PIR decode failure: symbol {index} recovered twice")
        out[index] = value
    missing = [i for i, v in enumerate(out) if v is None]
    if missing:
        raise PirDecodeError(f"PIR decode failure: symbols {missing} not recovered")
    return tuple(out)


# =============================================================================
# ASSINATURAS ESTRUTURAIS
# =============================================================================
def subset_signature(specs: Sequence[SumSpec]) -> Counter:
    """Multiset {message subset: count} seen by one database."""
    return Counter(spec.messages for spec in specs)


def expected_signature(cfg: PirConfig) -> Counter:
    N, K = cfg.n_dbs, cfg.n_messages
    return Counter(
        {
            frozenset(subset): (N - 1) ** (k - 1)
            for k in range(1, K + 1)
            for subset in combinations(range(K), k)
        }
    )


# =============================================================================
# FORMATO DE FIO
#   SumSpec: k (1) | k x (message 2, symbol 4)
#   consulta: grupo (4) | SumSpecs
#   resposta: grupo (4) | contagem (4) | símbolos (4 cada)
# =============================================================================
def encode_sum_spec(spec: SumSpec) -> bytes:
    return bytes([spec.k]) + b"".join(_TERM.pack(m, j) for m, j in spec.terms)


def encode_query(group: int, specs: Sequence[SumSpec]) -> bytes:
    return _GROUP.pack(group) + b"".join(encode_sum_spec(s) for s in specs)


def decode_query(data: bytes) -> Tuple[int, List[SumSpec]]:
    if len(data) < _GROUP.size:
        raise PirError("truncated PIR query")
    (group,) = _GROUP.unpack_from(data, 0)
    specs, pos = [], _GROUP.size
    while pos < len(data):
        k = data[pos]
        pos += 1
        end = pos + k * _TERM.size
        if k == 0 or end > len(data):
            raise PirError("truncated or empty SumSpec")
        terms = tuple(_TERM.unpack_from(data, pos + i * _TERM.size) for i in range(k))
        specs.append(SumSpec(terms))
        pos = end
    return group, specs


def encode_answer(group: int, answers: Sequence[FieldElement]) -> bytes:
    return (
        _GROUP.pack(group)
        + _COUNT.pack(len(answers))
        + encode_vector(answers)
    )


def decode_answer(data: bytes, modulus: FieldModulus) -> Tuple[int, Vector]:
    if len(data) < _GROUP.size + _COUNT.size:
        raise PirError("truncated PIR answer")
    (group,) = _GROUP.unpack_from(data, 0)
    (count,) = _COUNT.unpack_from(data, _GROUP.size)
    return group, decode_vector(data[_GROUP.size + _COUNT.size :], modulus, count)


# =============================================================================
# GRUPOS DE SUBPACOTES
# =============================================================================
def split_groups(row: Sequence[FieldElement], cfg: PirConfig) -> List[Vector]:
    L = cfg.subpacket_len
    return [tuple(row[g * L : (g + 1) * L]) for g in range(cfg.repetitions)]
