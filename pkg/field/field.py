"""
Prime-field arithmetic F_q for parameters, masks and codes.

Elements are immutable values bound to their modulus; mixing moduli is an
error. Vectors are plain tuples of elements.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence, Tuple

import galois
from sympy import isprime

DEFAULT_MODULUS = 65537
ELEMENT_BYTES = 4

_ELEMENT_STRUCT = struct.Struct("!I")


# =============================================================================
# ERROS
# =============================================================================
class FieldError(ValueError):
    """Invalid field construction or arithmetic."""


class FieldMismatchError(FieldError):
    """Operands live in different fields."""


class NoInverseError(FieldError):
    """Zero has no multiplicative inverse."""


# =============================================================================
# TIPOS
# =============================================================================
@dataclass(frozen=True)
class FieldModulus:
    q: int

    def __post_init__(self):
        if not isinstance(self.q, int) or self.q < 2:
            raise FieldError(f"modulus must be an integer >= 2, got {self.q!r}")
        if not isprime(self.q):
            raise FieldError(f"modulus {self.q} is not prime")
        if self.q >= 2**32:
            raise FieldError(f"modulus {self.q} does not fit the 4-byte element encoding")

    @property
    def bits(self) -> int:
        """Bits per symbol, ceil(log2 q)."""
        return max(1, math.ceil(math.log2(self.q)))

    def element(self, value: int) -> "FieldElement":
        return FieldElement(value % self.q, self)

    def zero(self) -> "FieldElement":
        return FieldElement(0, self)

    def one(self) -> "FieldElement":
        return FieldElement(1, self)

    def vector(self, values: Iterable[int]) -> "Vector":
        return tuple(FieldElement(v % self.q, self) for v in values)

    def zeros(self, length: int) -> "Vector":
        return tuple(FieldElement(0, self) for _ in range(length))

    def galois_field(self):
        """The galois FieldArray class for F_q (cached per q)."""
        return _galois_field(self.q)


@lru_cache(maxsize=None)
def _galois_field(q: int):
    return galois.GF(q)


@dataclass(frozen=True)
class FieldElement:
    value: int
    modulus: FieldModulus

    def __post_init__(self):
        if not 0 <= self.value < self.modulus.q:
            raise FieldError(f"{self.value} not in field range [0, {self.modulus.q - 1}]")

    def __repr__(self):
        return f"F{self.modulus.q}({self.value})"

    def __int__(self):
        return self.value

    def _check(self, other: "FieldElement"):
        if not isinstance(other, FieldElement):
            raise FieldError(f"expected a FieldElement, got {type(other).__name__}")
        if other.modulus.q != self.modulus.q:
            raise FieldMismatchError(
                f"cannot combine elements of F_{self.modulus.q} and F_{other.modulus.q}"
            )

    def __add__(self, other: "FieldElement") -> "FieldElement":
        self._check(other)
        return FieldElement((self.value + other.value) % self.modulus.q, self.modulus)

    def __sub__(self, other: "FieldElement") -> "FieldElement":
        self._check(other)
        return FieldElement((self.value - other.value) % self.modulus.q, self.modulus)

    def __mul__(self, other: "FieldElement") -> "FieldElement":
        self._check(other)
        return FieldElement((self.value * other.value) % self.modulus.q, self.modulus)

    def __neg__(self) -> "FieldElement":
        return FieldElement((-self.value) % self.modulus.q, self.modulus)

    def __truediv__(self, other: "FieldElement") -> "FieldElement":
        return self * other.inverse()

    def inverse(self) -> "FieldElement":
        if self.value == 0:
            raise NoInverseError("no inverse: zero element")
        return FieldElement(pow(self.value, self.modulus.q - 2, self.modulus.q), self.modulus)


Vector = Tuple[FieldElement, ...]


# =============================================================================
# OPERAÇÕES ESCALARES
# =============================================================================
def fq_add(a: FieldElement, b: FieldElement) -> FieldElement:
    return a + b


def fq_sub(a: FieldElement, b: FieldElement) -> FieldElement:
    return a + (-b)


def fq_mul(a: FieldElement, b: FieldElement) -> FieldElement:
    return a * b


def fq_inv(a: FieldElement) -> FieldElement:
    return a.inverse()


# =============================================================================
# OPERAÇÕES VETORIAIS
# =============================================================================
def _check_lengths(a: Sequence[FieldElement], b: Sequence[FieldElement]):
    if len(a) != len(b):
        raise FieldError(f"vector length mismatch: {len(a)} != {len(b)}")


def vec_add(a: Sequence[FieldElement], b: Sequence[FieldElement]) -> Vector:
    _check_lengths(a, b)
    return tuple(x + y for x, y in zip(a, b))


def vec_sub(a: Sequence[FieldElement], b: Sequence[FieldElement]) -> Vector:
    _check_lengths(a, b)
    return tuple(x - y for x, y in zip(a, b))


def vec_scale(scalar: FieldElement, v: Sequence[FieldElement]) -> Vector:
    return tuple(scalar * x for x in v)


def vec_values(v: Sequence[FieldElement]) -> Tuple[int, ...]:
    return tuple(x.value for x in v)


# =============================================================================
# CODIFICAÇÃO (4 bytes, big-endian)
# =============================================================================
def encode_element(e: FieldElement) -> bytes:
    return _ELEMENT_STRUCT.pack(e.value)


def decode_element(data: bytes, modulus: FieldModulus) -> FieldElement:
    if len(data) != ELEMENT_BYTES:
        raise FieldError(f"element encoding must be {ELEMENT_BYTES} bytes, got {len(data)}")
    (value,) = _ELEMENT_STRUCT.unpack(data)
    if value >= modulus.q:
        raise FieldError(f"decoded value {value} is not below q={modulus.q}")
    return FieldElement(value, modulus)


def encode_vector(v: Sequence[FieldElement]) -> bytes:
    return b"".join(_ELEMENT_STRUCT.pack(x.value) for x in v)


def decode_vector(data: bytes, modulus: FieldModulus, count: int) -> Vector:
    if len(data) != count * ELEMENT_BYTES:
        raise FieldError(
            f"expected {count * ELEMENT_BYTES} bytes for {count} elements, got {len(data)}"
        )
    return tuple(
        decode_element(data[i : i + ELEMENT_BYTES], modulus)
        for i in range(0, len(data), ELEMENT_BYTES)
    )
