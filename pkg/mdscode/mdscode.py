"""
Non-systematic (n, n) MDS coding of the iteration message and its partition
into exclusive shares, one per database.

The mixing matrix is public configuration. Secrecy of the message rests on no
single database holding every share, never on the code itself.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field as dc_field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from field.field import (
    ELEMENT_BYTES,
    FieldElement,
    FieldModulus,
    Vector,
    decode_vector,
    encode_vector,
)

logger = logging.getLogger(__name__)

_SHARE_HEADER = struct.Struct("!BQI")

VANDERMONDE = "vandermonde"
DENSE = "dense"
AUTO = "auto"


# =============================================================================
# ERROS
# =============================================================================
class MdsError(ValueError):
    """Invalid code construction, codeword or share set."""


class IncompleteShareSetError(MdsError):
    """Fewer shares than databases, duplicates, or mixed iterations."""


# =============================================================================
# CONTADOR DE OPERAÇÕES
# =============================================================================
@dataclass
class OpCounter:
    """Codec calls and counted multiply-accumulates for the computation row."""

    encode_ops: int = 0
    decode_ops: int = 0
    encode_macs: int = 0
    decode_macs: int = 0

    def reset(self):
        self.encode_ops = self.decode_ops = 0
        self.encode_macs = self.decode_macs = 0


# =============================================================================
# MATRIZ DE MISTURA
# =============================================================================
@dataclass(frozen=True, eq=False)
class MixingMatrix:
    n: int
    modulus: FieldModulus
    kind: str
    points: Tuple[int, ...]
    matrix: np.ndarray = dc_field(repr=False)
    inverse: np.ndarray = dc_field(repr=False)

    def rows(self) -> List[Tuple[int, ...]]:
        return [tuple(int(x) for x in row) for row in self.matrix]

    def block_rank(self, row_indices: Sequence[int]) -> int:
        """Rank of the rows held by a subset of shares."""
        if not row_indices:
            return 0
        return int(np.linalg.matrix_rank(self.matrix[list(row_indices), :]))


def _is_basis_row(row) -> bool:
    nonzero = [int(x) for x in row if int(x) != 0]
    return len(nonzero) == 1 and nonzero[0] == 1


def _finish(n: int, modulus: FieldModulus, kind: str, points, matrix) -> MixingMatrix:
    for i, row in enumerate(matrix):
        if _is_basis_row(row):
            raise MdsError(f"row {i} is a standard basis vector: code would be systematic")
    try:
        inverse = np.linalg.inv(matrix)
    except np.linalg.LinAlgError as exc:
        raise MdsError(f"{kind} mixing matrix of dimension {n} is singular") from exc
    return MixingMatrix(n, modulus, kind, tuple(points), matrix, inverse)


def build_mixing_matrix(n: int, points: Sequence[FieldElement]) -> MixingMatrix:
    """Column-Vandermonde matrix, entry(i, j) = points[j] ** i."""
    if n < 1:
        raise MdsError(f"dimension must be positive, got {n}")
    if len(points) != n:
        raise MdsError(f"need {n} evaluation points, got {len(points)}")
    modulus = points[0].modulus
    if modulus.q < n:
        raise MdsError(f"field too small: q={modulus.q} < n={n}")
    values = [p.value for p in points]
    if any(p.modulus.q != modulus.q for p in points):
        raise MdsError("evaluation points from different fields")
    if len(set(values)) != n:
        raise MdsError(f"evaluation points must be distinct, got {values}")

    GF = modulus.galois_field()
    matrix = GF([[pow(x, i, modulus.q) for x in values] for i in range(n)])
    return _finish(n, modulus, VANDERMONDE, values, matrix)


def build_dense_matrix(n: int, modulus: FieldModulus) -> MixingMatrix:
    """I + c*J for the smallest nonzero c that makes it invertible.

    Used when q <= n and no Vandermonde matrix over distinct points exists.
    """
    GF = modulus.galois_field()
    identity = GF(np.eye(n, dtype=int))
    ones = GF(np.ones((n, n), dtype=int))
    for c in range(1, modulus.q):
        matrix = identity + GF(c) * ones
        if int(np.linalg.det(matrix)) == 0:
            continue
        if any(_is_basis_row(row) for row in matrix):
            continue
        return _finish(n, modulus, DENSE, (c,), matrix)
    raise MdsError(f"no non-systematic dense mixing matrix of dimension {n} over F_{modulus.q}")


def default_mixing_matrix(n: int, modulus: FieldModulus, kind: str = VANDERMONDE) -> MixingMatrix:
    """Public default: Vandermonde over points 1..n, or the dense fallback."""
    if kind == AUTO:
        kind = VANDERMONDE if modulus.q > n else DENSE
    if kind == VANDERMONDE:
        if modulus.q <= n:
            raise MdsError(f"q={modulus.q} must exceed r+s={n} for Vandermonde points 1..{n}")
        return build_mixing_matrix(n, modulus.vector(range(1, n + 1)))
    if kind == DENSE:
        return build_dense_matrix(n, modulus)
    raise MdsError(f"unknown mixing kind {kind!r}")


# =============================================================================
# CODIFICAÇÃO / DECODIFICAÇÃO
# =============================================================================
def _to_gf(vector: Sequence[FieldElement], m: MixingMatrix):
    if len(vector) != m.n:
        raise MdsError(f"length mismatch: expected {m.n} symbols, got {len(vector)}")
    if any(x.modulus.q != m.modulus.q for x in vector):
        raise MdsError("symbols from a different field than the mixing matrix")
    GF = m.modulus.galois_field()
    return GF([x.value for x in vector])


def mds_encode(
    message: Sequence[FieldElement], m: MixingMatrix, counter: Optional[OpCounter] = None
) -> Vector:
    codeword = m.matrix @ _to_gf(message, m)
    if counter is not None:
        counter.encode_ops += 1
        counter.encode_macs += m.n * m.n
    return m.modulus.vector(int(x) for x in codeword)


def mds_decode(
    codeword: Sequence[FieldElement], m: MixingMatrix, counter: Optional[OpCounter] = None
) -> Vector:
    # the inverse is precomputed once per matrix, so a decode is one n x n product
    message = m.inverse @ _to_gf(codeword, m)
    if counter is not None:
        counter.decode_ops += 1
        counter.decode_macs += m.n * m.n
    return m.modulus.vector(int(x) for x in message)


# =============================================================================
# PARTIÇÃO EM PARTES EXCLUSIVAS
# =============================================================================
@dataclass(frozen=True)
class ExclusiveShare:
    db_index: int
    symbols: Vector
    iteration: int


def share_bounds(length: int, n_dbs: int, balanced: bool = False) -> List[Tuple[int, int]]:
    """Contiguous [start, end) blocks, one per database."""
    if n_dbs < 1:
        raise MdsError(f"need at least one database, got {n_dbs}")
    if length % n_dbs and not balanced:
        raise MdsError(f"N={n_dbs} does not divide codeword length {length}")
    base, extra = divmod(length, n_dbs)
    bounds, start = [], 0
    for i in range(n_dbs):
        size = base + (1 if i < extra else 0)
        bounds.append((start, start + size))
        start += size
    return bounds


def split_shares(
    codeword: Sequence[FieldElement], n_dbs: int, iteration: int, balanced: bool = False
) -> List[ExclusiveShare]:
    return [
        ExclusiveShare(i + 1, tuple(codeword[a:b]), iteration)
        for i, (a, b) in enumerate(share_bounds(len(codeword), n_dbs, balanced))
    ]


def join_shares(shares: Sequence[ExclusiveShare], n_dbs: int) -> Vector:
    indices = sorted(s.db_index for s in shares)
    if indices != list(range(1, n_dbs + 1)):
        raise IncompleteShareSetError(
            f"incomplete share set: have databases {indices}, need 1..{n_dbs}"
        )
    if len({s.iteration for s in shares}) != 1:
        raise IncompleteShareSetError("incomplete share set: shares from different iterations")
    ordered = sorted(shares, key=lambda s: s.db_index)
    return tuple(x for s in ordered for x in s.symbols)


# =============================================================================
# FORMATO DE FIO: db_index (1) | iteração (8) | contagem (4) | símbolos (4 cada)
# =============================================================================
def encode_share(share: ExclusiveShare) -> bytes:
    header = _SHARE_HEADER.pack(share.db_index, share.iteration, len(share.symbols))
    return header + encode_vector(share.symbols)


def decode_share(data: bytes, modulus: FieldModulus) -> ExclusiveShare:
    if len(data) < _SHARE_HEADER.size:
        raise MdsError("truncated share header")
    db_index, iteration, count = _SHARE_HEADER.unpack_from(data, 0)
    body = data[_SHARE_HEADER.size :]
    if len(body) != count * ELEMENT_BYTES:
        raise MdsError(f"share declares {count} symbols but carries {len(body)} bytes")
    return ExclusiveShare(db_index, decode_vector(body, modulus, count), iteration)


SHARE_HEADER_BYTES = _SHARE_HEADER.size
