"""
Privacy checks on what a single database observes.

A view is everything DB_i receives plus the state it stores, iteration by
iteration. Two views are compared as exact probability distributions over
all protocol randomness at toy scale: masking coefficients, the update delta
(modelled uniform over F_q^s) and the PIR permutations. The PIR queries are
drawn independently of everything else, so their distribution is a separate
factor; the joint distributions agree iff every factor agrees.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations, product
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import chi2_contingency

from audit.ledger import NAIVE, PROPOSED
from field.field import vec_add, vec_values
from mdscode.mdscode import decode_share, mds_encode, share_bounds, split_shares
from naive.naive import NaiveDatabase, encode_range
from pir.pir import (
    PirConfig,
    build_query_plan,
    encode_query,
    expected_signature,
    pir_generate_queries,
    subset_signature,
)
from protocol.database import DatabaseServer
from protocol.protocol import (
    IterMessage,
    ParamMatrix,
    ProtocolConfig,
    UploadBundle,
    Variant,
    compute_upload,
    decode_bundle,
    initial_alpha,
)
from transport.transport import MessageKind

logger = logging.getLogger(__name__)

STORED_STATE = "stored-state"
WITH_NEW_SHARE = "with-new-share"
SCOPES = (STORED_STATE, WITH_NEW_SHARE)

DEFAULT_BUDGET = 1_000_000

FOUND = "found"
NO_WITNESS = "none"
INCONCLUSIVE = "inconclusive"

Values = Tuple[int, ...]


class ScaleTooLargeError(ValueError):
    """The exact enumeration would exceed its point budget."""


# =============================================================================
# VISÕES
# =============================================================================
@dataclass(frozen=True)
class IterationView:
    iteration: int
    stored_rows: Tuple[Values, ...]
    stored_share: Values
    queries: Tuple[bytes, ...]
    combos: Tuple[Values, ...]
    new_share: Optional[Values] = None

    def state_part(self) -> tuple:
        return (self.iteration, self.stored_rows, self.stored_share, self.combos, self.new_share)


@dataclass(frozen=True)
class TranscriptView:
    """What exactly one database saw: S_{t,i}, Q_{t,i} and U_{t,i} for every t."""

    db_index: int
    scheme: str
    scope: str
    iterations: Tuple[IterationView, ...]

    @property
    def T(self) -> int:
        return len(self.iterations)

    def state_part(self) -> tuple:
        return tuple(v.state_part() for v in self.iterations)

    @classmethod
    def from_database(cls, server, scope: str = STORED_STATE) -> "TranscriptView":
        if scope not in SCOPES:
            raise ValueError(f"unknown view scope {scope!r}")
        if isinstance(server, NaiveDatabase):
            return cls._from_naive(server, scope)
        if not isinstance(server, DatabaseServer):
            raise TypeError(f"cannot build a view from {type(server).__name__}")
        modulus = server.cfg.modulus
        views = []
        for t in range(1, len(server.history)):
            state = server.history[t - 1]
            combos = decode_bundle(server.received_at(t, MessageKind.UPLOAD_COMBOS)[-1], modulus)
            new_share = None
            if scope == WITH_NEW_SHARE:
                payload = server.received_at(t, MessageKind.UPLOAD_SHARE)[-1]
                new_share = vec_values(decode_share(payload, modulus).symbols)
            views.append(
                IterationView(
                    t,
                    tuple(vec_values(row) for row in state.encoded.rows),
                    vec_values(state.share.symbols),
                    tuple(server.received_at(t, MessageKind.PIR_QUERY)),
                    tuple(vec_values(row) for row in combos.combos),
                    new_share,
                )
            )
        return cls(server.db_index, PROPOSED, scope, tuple(views))

    @classmethod
    def _from_naive(cls, server: NaiveDatabase, scope: str) -> "TranscriptView":
        views = []
        for t in range(1, len(server.history)):
            push = decode_bundle(server.received_at(t, MessageKind.NAIVE_PUSH)[-1], server.cfg.modulus)
            views.append(
                IterationView(
                    t,
                    tuple(vec_values(row) for row in server.history[t - 1].plain),
                    (),
                    tuple(server.received_at(t, MessageKind.NAIVE_GET)),
                    tuple(vec_values(row) for row in push.combos),
                )
            )
        return cls(server.db_index, NAIVE, scope, tuple(views))


# =============================================================================
# MODELO DA VISÃO
# =============================================================================
class ViewModel:
    """Recomputes a database's view from explicit randomness."""

    def __init__(
        self,
        cfg: ProtocolConfig,
        initial: ParamMatrix,
        db_index: int,
        scope: str = STORED_STATE,
        variant: Variant = Variant.HONEST,
    ):
        if not 1 <= db_index <= cfg.n_dbs:
            raise ValueError(f"database index {db_index} outside [1, {cfg.n_dbs}]")
        self.cfg = cfg
        self.initial = tuple(tuple(row) for row in initial)
        self.db_index = db_index
        self.scope = scope
        self.variant = variant
        self.pir = cfg.pir_config()
        self._share = lru_cache(maxsize=None)(self._compute_share)

    # ---- sorteios ----------------------------------------------------------
    def alpha_draws(self, d: int) -> List[Values]:
        r, q = self.cfg.n_submodels, self.cfg.modulus.q
        if self.variant == Variant.CONSTANT_ALPHA:
            others = [(0,) * (r - 1)]
        else:
            others = list(permutations(range(2, q), r - 1))
        return [o[: d - 1] + (1,) + o[d - 1 :] for o in others]

    def delta_draws(self) -> Iterator[Values]:
        return product(range(self.cfg.modulus.q), repeat=self.cfg.submodel_len)

    def draws_per_iteration(self) -> int:
        r, q, s = self.cfg.n_submodels, self.cfg.modulus.q, self.cfg.submodel_len
        n_alpha = 1 if self.variant == Variant.CONSTANT_ALPHA else math.perm(q - 2, r - 1)
        return n_alpha * q**s

    def permutation_draws(self) -> Iterator[tuple]:
        L = self.pir.subpacket_len
        return product(permutations(range(L)), repeat=self.pir.n_messages)

    def permutation_count(self) -> int:
        return math.factorial(self.pir.subpacket_len) ** self.pir.n_messages

    # ---- componentes -------------------------------------------------------
    def message(self, alpha: Values, delta: Values) -> IterMessage:
        m = self.cfg.modulus
        return IterMessage(m.vector(alpha), m.vector(delta))

    def _compute_share(self, alpha: Values, delta: Values) -> Values:
        codeword = mds_encode(self.message(alpha, delta).as_vector(), self.cfg.mixing)
        shares = split_shares(codeword, self.cfg.n_dbs, 0, self.cfg.balanced_shares)
        return vec_values(shares[self.db_index - 1].symbols)

    def share(self, alpha: Values, delta: Values) -> Values:
        return self._share(alpha, delta)

    def bootstrap_message(self) -> Tuple[Values, Values]:
        return vec_values(initial_alpha(self.cfg)), (0,) * self.cfg.submodel_len

    def step(self, t: int, rows, prev: Tuple[Values, Values], current: Tuple[Values, Values]):
        """State part of iteration t and the rows after it."""
        bundle: UploadBundle = compute_upload(
            self.message(*current), self.message(*prev), self.variant
        )
        combos = tuple(vec_values(u) for u in bundle.combos)
        new_share = self.share(*current) if self.scope == WITH_NEW_SHARE else None
        part = (t, tuple(vec_values(row) for row in rows), self.share(*prev), combos, new_share)
        next_rows = tuple(vec_add(row, u) for row, u in zip(rows, bundle.combos))
        return part, next_rows

    def query_payload(self, t_choice: int, group: int, perms) -> bytes:
        plan = build_query_plan(t_choice - 1, self.pir, perms)
        return encode_query(group, plan.per_db[self.db_index - 1])

    # ---- enumeração --------------------------------------------------------
    def _walk(self, choices: Sequence[int], t: int, rows, prev, prefix, out: Counter):
        if t > len(choices):
            out[prefix] += 1
            return
        for alpha in self.alpha_draws(choices[t - 1]):
            for delta in self.delta_draws():
                current = (alpha, delta)
                part, next_rows = self.step(t, rows, prev, current)
                self._walk(choices, t + 1, next_rows, current, prefix + (part,), out)

    def state_distribution(self, choices: Sequence[int], workers: int = 1) -> Counter:
        """Counts over every (alpha, delta) sequence, fanned out on the first draw."""
        first = [(a, dl) for a in self.alpha_draws(choices[0]) for dl in self.delta_draws()]
        prev = self.bootstrap_message()

        def branch(chunk):
            out = Counter()
            for current in chunk:
                part, next_rows = self.step(1, self.initial, prev, current)
                self._walk(choices, 2, next_rows, current, (part,), out)
            return out

        chunks = [first[i::workers] for i in range(workers)]
        total = Counter()
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for partial in pool.map(branch, chunks):
                total.update(partial)
        return total

    def query_distribution(self, choice: int, group: int) -> Counter:
        return Counter(self.query_payload(choice, group, perms) for perms in self.permutation_draws())


# =============================================================================
# IGUALDADE DE DISTRIBUIÇÕES
# =============================================================================
@dataclass(frozen=True)
class FactorCheck:
    name: str
    equal: bool
    support: int
    support_alt: int


@dataclass
class PrivacyVerdict:
    db_index: int
    choices: Tuple[int, ...]
    choices_alt: Tuple[int, ...]
    scope: str
    variant: Variant
    factors: List[FactorCheck] = field(default_factory=list)

    @property
    def equal(self) -> bool:
        return all(f.equal for f in self.factors)

    @property
    def support_size(self) -> int:
        return math.prod(f.support for f in self.factors)

    def line(self) -> str:
        status = "equal" if self.equal else "DIFFERENT"
        return (
            f"db={self.db_index} d={self.choices[-1]} vs d'={self.choices_alt[-1]} "
            f"scope={self.scope} variant={self.variant.value} support={self.support_size} {status}"
        )


def enumeration_points(model: ViewModel, iterations: int) -> int:
    states = model.draws_per_iteration() ** iterations
    queries = iterations * model.pir.repetitions * model.permutation_count()
    return states + queries


def view_distribution_equality(
    cfg: ProtocolConfig,
    iterations: int,
    pairs: Optional[Sequence[Tuple[int, int]]] = None,
    db_indices: Optional[Sequence[int]] = None,
    initial: Optional[ParamMatrix] = None,
    prefix: Optional[Sequence[int]] = None,
    scope: str = STORED_STATE,
    variant: Variant = Variant.HONEST,
    budget: int = DEFAULT_BUDGET,
    workers: int = 4,
) -> List[PrivacyVerdict]:
    """Exact per-database view distributions under d versus d' at the last iteration.

    Earlier iterations use the fixed choices in `prefix` (default all 1).
    """
    r = cfg.n_submodels
    if iterations < 1:
        raise ValueError("need at least one iteration")
    pairs = list(pairs) if pairs is not None else [(a, b) for a in range(1, r + 1) for b in range(a + 1, r + 1)]
    db_indices = list(db_indices) if db_indices is not None else list(range(1, cfg.n_dbs + 1))
    prefix = tuple(prefix) if prefix is not None else (1,) * (iterations - 1)
    if len(prefix) != iterations - 1:
        raise ValueError(f"prefix needs {iterations - 1} choices")
    if initial is None:
        initial = tuple(cfg.modulus.zeros(cfg.submodel_len) for _ in range(r))

    verdicts = []
    for db in db_indices:
        model = ViewModel(cfg, initial, db, scope, variant)
        points = enumeration_points(model, iterations) * 2 * max(len(pairs), 1)
        if points > budget:
            raise ScaleTooLargeError(
                f"scale too large: {points} enumeration points exceed the budget of {budget}"
            )
        states: Dict[Tuple[int, ...], Counter] = {}
        queries: Dict[Tuple[int, int, int], Counter] = {}
        for d, d_alt in pairs:
            a, b = prefix + (d,), prefix + (d_alt,)
            verdict = PrivacyVerdict(db, a, b, scope, variant)
            for key in (a, b):
                if key not in states:
                    states[key] = model.state_distribution(key, workers)
            verdict.factors.append(
                FactorCheck("state", states[a] == states[b], len(states[a]), len(states[b]))
            )
            for t in range(1, iterations + 1):
                for g in range(model.pir.repetitions):
                    for choice in (a[t - 1], b[t - 1]):
                        if (t, g, choice) not in queries:
                            queries[(t, g, choice)] = model.query_distribution(choice, g)
                    qa, qb = queries[(t, g, a[t - 1])], queries[(t, g, b[t - 1])]
                    verdict.factors.append(FactorCheck(f"queries[t={t},g={g}]", qa == qb, len(qa), len(qb)))
            logger.info(verdict.line())
            verdicts.append(verdict)
    return verdicts


# =============================================================================
# BUSCA DE TESTEMUNHAS
# =============================================================================
@dataclass(frozen=True)
class Witness:
    choices: Tuple[int, ...]
    messages: Tuple[Tuple[Values, Values], ...]
    permutations: Tuple[tuple, ...]


@dataclass(frozen=True)
class WitnessResult:
    status: str
    d_alt: int
    explored: int
    witness: Optional[Witness] = None

    @property
    def found(self) -> bool:
        return self.status == FOUND


class _Budget:
    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    def spend(self) -> bool:
        self.used += 1
        return self.used <= self.limit


def _state_witnesses(model: ViewModel, view: TranscriptView, d_alt: int, budget: _Budget):
    """Every (choices, messages) sequence reproducing the stored-state part of the view."""
    T = view.T
    target = view.state_part()

    def walk(t, rows, prev, choices, messages):
        if t > T:
            yield tuple(choices), tuple(messages)
            return
        options = [d_alt] if t == T else range(1, model.cfg.n_submodels + 1)
        for d in options:
            for alpha in model.alpha_draws(d):
                for delta in model.delta_draws():
                    if not budget.spend():
                        return
                    current = (alpha, delta)
                    part, next_rows = model.step(t, rows, prev, current)
                    if part != target[t - 1]:
                        continue
                    yield from walk(t + 1, next_rows, current, choices + [d], messages + [current])

    yield from walk(1, model.initial, model.bootstrap_message(), [], [])


def _query_witness(model: ViewModel, view: TranscriptView, choices, budget: _Budget):
    found = []
    for t, it in enumerate(view.iterations, start=1):
        for g, observed in enumerate(it.queries):
            for perms in model.permutation_draws():
                if not budget.spend():
                    return None
                if model.query_payload(choices[t - 1], g, perms) == observed:
                    found.append(perms)
                    break
            else:
                return None
    return tuple(found)


def _naive_witness(view: TranscriptView, d_alt: int, n_dbs: int, r: int, s: int) -> WitnessResult:
    # nothing in a naive view depends on the chosen submodel
    a, b = share_bounds(r * s, n_dbs, balanced=True)[view.db_index - 1]
    expected_get = encode_range(a, b - a)
    consistent = all(it.queries == (expected_get,) for it in view.iterations)
    if not consistent:
        return WitnessResult(NO_WITNESS, d_alt, view.T)
    choices = (1,) * (view.T - 1) + (d_alt,)
    messages = tuple(((), tuple(v for row in it.combos for v in row)) for it in view.iterations)
    return WitnessResult(FOUND, d_alt, view.T, Witness(choices, messages, ()))


def witness_search(
    view: TranscriptView,
    d_alt: int,
    cfg: ProtocolConfig,
    initial: ParamMatrix,
    budget: int = DEFAULT_BUDGET,
    variant: Variant = Variant.HONEST,
) -> WitnessResult:
    """Find randomness under which the last chooser picked d_alt and DB_i saw exactly `view`."""
    cfg.check_index(d_alt)
    if view.T < 1:
        raise ValueError("empty view")
    if view.scheme == NAIVE:
        return _naive_witness(view, d_alt, cfg.n_dbs, cfg.n_submodels, cfg.submodel_len)

    model = ViewModel(cfg, initial, view.db_index, view.scope, variant)
    spent = _Budget(budget)
    for choices, messages in _state_witnesses(model, view, d_alt, spent):
        perms = _query_witness(model, view, choices, spent)
        if perms is not None:
            return WitnessResult(FOUND, d_alt, spent.used, Witness(choices, messages, perms))
        if spent.used > budget:
            break
    if spent.used > budget:
        return WitnessResult(INCONCLUSIVE, d_alt, spent.used)
    return WitnessResult(NO_WITNESS, d_alt, spent.used)


# =============================================================================
# TESTE AMOSTRAL (qui-quadrado)
# =============================================================================
@dataclass(frozen=True)
class SampledVerdict:
    db_index: int
    samples: int
    statistic: float
    p_value: float
    dof: int
    significance: float
    structural_ok: bool

    @property
    def passed(self) -> bool:
        return self.structural_ok and self.p_value >= self.significance


def sampled_pir_privacy(
    pcfg: PirConfig,
    samples: int = 10_000,
    seed: int = 0,
    significance: float = 0.01,
    db_indices: Optional[Sequence[int]] = None,
) -> List[SampledVerdict]:
    """Chi-squared homogeneity of (round, message, symbol) counts across desired indices."""
    rng = np.random.default_rng(seed & (2**64 - 1))
    db_indices = list(db_indices) if db_indices is not None else list(range(1, pcfg.n_dbs + 1))
    expected = expected_signature(pcfg)
    counts = {db: [Counter() for _ in range(pcfg.n_messages)] for db in db_indices}
    structural_ok = {db: True for db in db_indices}
    for d in range(pcfg.n_messages):
        for _ in range(samples):
            plan = pir_generate_queries(d, pcfg, rng)
            for db in db_indices:
                specs = plan.per_db[db - 1]
                if subset_signature(specs) != expected:
                    structural_ok[db] = False
                for spec in specs:
                    for m, j in spec.terms:
                        counts[db][d][(spec.k, m, j)] += 1

    verdicts = []
    for db in db_indices:
        columns = sorted(set().union(*counts[db]))
        table = np.array([[row[c] for c in columns] for row in counts[db]])
        statistic, p_value, dof, _ = chi2_contingency(table)
        verdict = SampledVerdict(db, samples, float(statistic), float(p_value), int(dof), significance, structural_ok[db])
        logger.info("sampled PIR privacy db=%d p=%.4f passed=%s", db, verdict.p_value, verdict.passed)
        verdicts.append(verdict)
    return verdicts
