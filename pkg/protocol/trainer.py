"""
Black-box trainer f(s): maps B_{t,d} to B_{t+1,d}.

Both kinds are deterministic in (seed, input row, iteration), so the protocol
and the plaintext reference reach the same state when fed the same rows.
"""

from __future__ import annotations

import hashlib
import logging

import numpy as np

from field.field import FieldModulus, Vector, encode_vector, vec_add

logger = logging.getLogger(__name__)

PSEUDORANDOM = "pseudorandom"
TOY_LEAST_SQUARES = "toy-least-squares"
TRAINER_KINDS = (PSEUDORANDOM, TOY_LEAST_SQUARES)

QUANT_SCALE = 2**8


class TrainerError(ValueError):
    pass


class TrainerOracle:
    def __init__(
        self,
        kind: str,
        seed: int,
        modulus: FieldModulus,
        samples: int = 8,
        learning_rate: float = 0.05,
    ):
        if kind not in TRAINER_KINDS:
            raise TrainerError(f"unknown trainer kind {kind!r}; choose one of {TRAINER_KINDS}")
        self.kind = kind
        self.seed = seed & (2**64 - 1)
        self.modulus = modulus
        self.samples = samples
        self.learning_rate = learning_rate
        self.calls = 0

    def __call__(self, row: Vector, iteration: int) -> Vector:
        self.calls += 1
        if self.kind == PSEUDORANDOM:
            return self._pseudorandom(row, iteration)
        return self._least_squares(row, iteration)

    def _digest(self, row: Vector, iteration: int) -> int:
        h = hashlib.sha256()
        h.update(self.seed.to_bytes(8, "big"))
        h.update(iteration.to_bytes(8, "big"))
        h.update(encode_vector(row))
        return int.from_bytes(h.digest()[:8], "big")

    def _pseudorandom(self, row: Vector, iteration: int) -> Vector:
        rng = np.random.default_rng(self._digest(row, iteration))
        delta = rng.integers(0, self.modulus.q, size=len(row))
        return vec_add(row, self.modulus.vector(int(x) for x in delta))

    # -------------------------------------------------------------------------
    # mínimos quadrados de brinquedo em ponto fixo
    # -------------------------------------------------------------------------
    def _to_real(self, row: Vector) -> np.ndarray:
        q = self.modulus.q
        signed = np.array([v.value if v.value <= q // 2 else v.value - q for v in row], dtype=float)
        return signed / QUANT_SCALE

    def _to_field(self, weights: np.ndarray) -> Vector:
        fixed = np.rint(weights * QUANT_SCALE).astype(np.int64)
        return self.modulus.vector(int(x) % self.modulus.q for x in fixed)

    def _least_squares(self, row: Vector, iteration: int) -> Vector:
        """One gradient step on a synthetic regression task for this iteration."""
        rng = np.random.default_rng([self.seed, iteration])
        s = len(row)
        X = rng.normal(size=(self.samples, s))
        y = X @ rng.normal(size=s)
        w = self._to_real(row)
        grad = X.T @ (X @ w - y) / self.samples
        return self._to_field(w - self.learning_rate * grad)
