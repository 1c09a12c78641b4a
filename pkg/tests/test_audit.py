from fractions import Fraction

import pytest

from audit.ledger import (
    DOWNLOAD_PIR,
    NAIVE,
    PROPOSED,
    OverheadLedger,
    assert_ledger,
    beta,
    closed_form,
    lower_bound_report,
    overall_difference,
)
from audit.privacy import (
    FOUND,
    INCONCLUSIVE,
    NO_WITNESS,
    STORED_STATE,
    WITH_NEW_SHARE,
    IterationView,
    ScaleTooLargeError,
    TranscriptView,
    ViewModel,
    sampled_pir_privacy,
    view_distribution_equality,
    witness_search,
)
from naive.naive import NaiveConfig
from pir.pir import PirConfig
from protocol.protocol import ProtocolConfig, Variant
from protocol.simulation import Simulation


# =============================================================================
# FORMAS FECHADAS
# =============================================================================
def test_beta():
    assert beta(2, 1) == 0
    assert beta(2, 2) == Fraction(1, 2)
    assert beta(2, 8) == Fraction(127, 128)
    assert beta(3, 3) == Fraction(4, 9)


def test_small_instance_table():
    proposed = closed_form(2, 2, 4, PROPOSED)
    naive = closed_form(2, 2, 4, NAIVE)
    assert (proposed.download, proposed.upload, proposed.overall) == (12, 22, 34)
    assert (naive.download, naive.upload, naive.overall) == (8, 16, 24)
    assert overall_difference(2, 2, 4) == 10


def test_large_r_crossover():
    proposed = closed_form(2, 8, 256, PROPOSED)
    naive = closed_form(2, 8, 256, NAIVE)
    assert (proposed.download, proposed.upload) == (774, 4360)
    assert naive.overall == 6144
    assert overall_difference(2, 8, 256) == proposed.overall - naive.overall == -1010


@pytest.mark.parametrize("n,r,s", [(2, 2, 4), (3, 2, 9), (2, 4, 16), (3, 3, 27)])
def test_difference_formula_matches_the_tables(n, r, s):
    diff = closed_form(n, r, s, PROPOSED).overall - closed_form(n, r, s, NAIVE).overall
    assert diff == overall_difference(n, r, s)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("r", [2, 3, 4])
def test_measured_ledgers_match_both_tables(n, r):
    s = n**r
    cfg = ProtocolConfig.build(n, r, s, balanced_shares=True)
    proposed = Simulation(cfg, seed=r).run(1)
    assert assert_ledger(proposed.total, n, r, s, PROPOSED).passed
    naive = Simulation(NaiveConfig(n, r, s, cfg.modulus), seed=r, scheme=NAIVE).run(1)
    assert assert_ledger(naive.total, n, r, s, NAIVE).passed


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("r", [1, 2, 3])
def test_pir_phase_download_is_optimal(n, r):
    s = n**r
    cfg = ProtocolConfig.build(n, r, s, balanced_shares=True)
    ledger = Simulation(cfg, seed=0).run(1).total
    assert ledger.phases[DOWNLOAD_PIR] == (1 + beta(n, r)) * s


@pytest.mark.parametrize("seed", range(10))
def test_long_runs_track_the_reference(small_cfg, seed):
    # the simulation checks oracle equality after every iteration
    report = Simulation(small_cfg, seed=seed).run(20)
    assert len(report.iterations) == 20
    mixed = [1, 2, 2, 1, 1, 1, 2, 1, 2, 2] * 2
    report = Simulation(small_cfg, seed=seed).run(20, schedule=mixed)
    assert assert_ledger(report.total, 2, 2, 4, PROPOSED).passed


def test_tampered_ledger_is_caught(small_cfg):
    report = Simulation(small_cfg, seed=0).run(2)
    assert assert_ledger(report.total, 2, 2, 4, PROPOSED).passed
    tampered = report.total.copy()
    tampered.record(1, DOWNLOAD_PIR, 1)
    check = assert_ledger(tampered, 2, 2, 4, PROPOSED)
    assert not check.passed
    assert {c.phase: c.delta for c in check.failures()} == {DOWNLOAD_PIR: 1, "download": 1, "overall": 1}


def test_empty_ledger_fails():
    assert not assert_ledger(OverheadLedger(), 2, 2, 4, PROPOSED, iterations=1).passed


def test_lower_bound_gaps(small_cfg):
    report = Simulation(small_cfg, seed=4).run(3)
    rows = {row.quantity: row for row in lower_bound_report(2, 2, 4, report.total)}
    assert all(row.ok for row in rows.values())
    assert rows["download"].bound == 18 and rows["download"].gap == 18
    assert rows["upload"].bound == 48 and rows["upload"].gap == 18
    assert rows["computation"].gap == 6


# =============================================================================
# IGUALDADE DE DISTRIBUIÇÕES (F_3)
# =============================================================================
def test_single_iteration_views_are_identical(tiny_cfg):
    verdicts = view_distribution_equality(tiny_cfg, 1)
    assert [v.db_index for v in verdicts] == [1, 2]
    for v in verdicts:
        assert v.equal, v.line()
        assert v.support_size > 1


def test_two_iteration_views_are_identical(tiny_cfg):
    verdicts = view_distribution_equality(tiny_cfg, 2)
    assert all(v.equal for v in verdicts)
    verdicts = view_distribution_equality(tiny_cfg, 2, prefix=[2], db_indices=[1])
    assert verdicts[0].choices == (2, 1) and verdicts[0].equal


def test_new_share_in_the_view_leaks_the_choice(tiny_cfg):
    verdicts = view_distribution_equality(tiny_cfg, 1, scope=WITH_NEW_SHARE)
    assert not any(v.equal for v in verdicts)
    failing = {f.name for v in verdicts for f in v.factors if not f.equal}
    assert failing == {"state"}


@pytest.mark.parametrize("variant", [Variant.CONSTANT_ALPHA, Variant.UNMASKED_UPLOAD])
def test_broken_variants_are_detected(tiny_cfg, variant):
    verdicts = view_distribution_equality(tiny_cfg, 1, variant=variant)
    assert not any(v.equal for v in verdicts)


def test_scale_too_large():
    cfg = ProtocolConfig.build(2, 2, 4, 5, mixing_kind="auto")
    with pytest.raises(ScaleTooLargeError, match="scale too large"):
        view_distribution_equality(cfg, 2)
    with pytest.raises(ScaleTooLargeError):
        view_distribution_equality(cfg, 1, budget=10)


def test_prefix_length_checked(tiny_cfg):
    with pytest.raises(ValueError):
        view_distribution_equality(tiny_cfg, 2, prefix=[1, 1])


# =============================================================================
# TESTEMUNHAS
# =============================================================================
@pytest.mark.parametrize("T", [1, 2])
def test_every_honest_view_has_a_witness_for_every_choice(tiny_cfg, T):
    sim = Simulation(tiny_cfg, seed=21)
    sim.run(T)
    for db in sim.databases:
        view = TranscriptView.from_database(db)
        assert view.T == T
        for d_alt in (1, 2):
            result = witness_search(view, d_alt, tiny_cfg, sim.initial)
            assert result.status == FOUND, (db.db_index, d_alt)
            assert result.witness.choices[-1] == d_alt


def test_witness_budget_exhaustion(tiny_cfg):
    sim = Simulation(tiny_cfg, seed=21)
    sim.run(2)
    view = TranscriptView.from_database(sim.databases[0])
    assert witness_search(view, 2, tiny_cfg, sim.initial, budget=3).status == INCONCLUSIVE


def fixed_view(cfg, variant, d, delta, db_index=1):
    """One-iteration view of DB_i with explicit randomness."""
    initial = tuple(cfg.modulus.zeros(cfg.submodel_len) for _ in range(cfg.n_submodels))
    model = ViewModel(cfg, initial, db_index, STORED_STATE, variant)
    alpha = model.alpha_draws(d)[0]
    part, _ = model.step(1, model.initial, model.bootstrap_message(), (alpha, delta))
    perms = next(iter(model.permutation_draws()))
    query = model.query_payload(d, 0, perms)
    view = TranscriptView(db_index, PROPOSED, STORED_STATE, (IterationView(1, part[1], part[2], (query,), part[3]),))
    return view, initial


@pytest.mark.parametrize("variant", [Variant.CONSTANT_ALPHA, Variant.UNMASKED_UPLOAD])
def test_broken_variants_have_no_witness_for_the_other_choice(tiny_cfg, variant):
    view, initial = fixed_view(tiny_cfg, variant, d=1, delta=(1, 0, 2, 1))
    assert witness_search(view, 1, tiny_cfg, initial, variant=variant).status == FOUND
    assert witness_search(view, 2, tiny_cfg, initial, variant=variant).status == NO_WITNESS


def test_honest_fixed_view_has_both_witnesses(tiny_cfg):
    view, initial = fixed_view(tiny_cfg, Variant.HONEST, d=2, delta=(2, 2, 0, 1), db_index=2)
    assert witness_search(view, 1, tiny_cfg, initial).found
    assert witness_search(view, 2, tiny_cfg, initial).found


def test_naive_views_never_depend_on_the_choice():
    cfg = NaiveConfig(2, 2, 4, ProtocolConfig.build(2, 2, 4).modulus)
    sim = Simulation(cfg, seed=5, scheme=NAIVE)
    sim.run(2)
    for db in sim.databases:
        view = TranscriptView.from_database(db)
        assert all(witness_search(view, d, cfg, sim.initial).found for d in (1, 2))


def test_view_scope_is_validated(small_cfg):
    sim = Simulation(small_cfg, seed=0)
    sim.run(1)
    with pytest.raises(ValueError):
        TranscriptView.from_database(sim.databases[0], "everything")
    view = TranscriptView.from_database(sim.databases[0], WITH_NEW_SHARE)
    assert view.iterations[0].new_share is not None


# =============================================================================
# TESTE AMOSTRAL
# =============================================================================
def test_sampled_pir_check():
    verdicts = sampled_pir_privacy(PirConfig(2, 2, 4), samples=2000, seed=3)
    assert len(verdicts) == 2
    for v in verdicts:
        assert v.structural_ok
        assert v.dof > 0
        assert v.p_value > 1e-4
