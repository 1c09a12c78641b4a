import numpy as np
import pytest

from audit.ledger import PROPOSED, assert_ledger
from field.field import FieldModulus, vec_add, vec_values
from mdscode.mdscode import DENSE, ExclusiveShare, encode_share
from protocol.database import DatabaseServer
from protocol.machine import LocalMachine
from protocol.protocol import (
    ConfigError,
    IterationAborted,
    IterMessage,
    MalformedMessageError,
    ProtocolConfig,
    ProtocolError,
    UploadBundle,
    Variant,
    bootstrap,
    compute_upload,
    db_apply_upload,
    decode_bundle,
    demask,
    encode_bundle,
    make_message,
    random_params,
    recover_plain,
)
from protocol.simulation import ReferenceModel, Simulation, seeded_schedule
from protocol.trainer import PSEUDORANDOM, TOY_LEAST_SQUARES, TrainerError, TrainerOracle
from transport.transport import MessageKind, SimulatedChannel, error_frame, frame_decode, frame_encode


def categories(exc_info):
    return {v.category for v in exc_info.value.violations}


# =============================================================================
# CONFIGURAÇÃO
# =============================================================================
def test_divisibility_violations():
    with pytest.raises(ConfigError) as exc:
        ProtocolConfig.build(2, 2, 5)
    assert categories(exc) == {"DIVISIBILITY"}
    assert "N^r=4" in str(exc.value)


def test_balanced_shares_lift_the_share_divisibility():
    with pytest.raises(ConfigError):
        ProtocolConfig.build(2, 3, 8)
    cfg = ProtocolConfig.build(2, 3, 8, balanced_shares=True)
    assert cfg.message_len == 11


def test_small_fields():
    with pytest.raises(ConfigError) as exc:
        ProtocolConfig.build(2, 2, 4, 3)
    assert categories(exc) == {"FIELD"}
    assert ProtocolConfig.build(2, 2, 4, 3, mixing_kind="auto").mixing.kind == DENSE
    with pytest.raises(ConfigError, match="distinct nonzero"):
        ProtocolConfig.build(2, 2, 4, 2, mixing_kind="dense")


def test_single_database_rejected():
    with pytest.raises(ConfigError) as exc:
        ProtocolConfig.build(1, 2, 4)
    assert "RANGE" in categories(exc)


# =============================================================================
# MENSAGEM
# =============================================================================
def test_make_message_marks_only_the_chosen_row(small_cfg, rng):
    F = small_cfg.modulus
    for d in (1, 2):
        m = make_message(d, F.zeros(4), small_cfg, rng)
        assert m.chosen_index == d
        others = [a.value for i, a in enumerate(m.alpha, start=1) if i != d]
        assert all(2 <= a < F.q for a in others)


def test_coefficients_are_distinct(rng):
    cfg = ProtocolConfig.build(2, 4, 16, 23)
    for _ in range(20):
        m = make_message(3, cfg.modulus.zeros(16), cfg, rng)
        values = vec_values(m.alpha)
        assert len(set(values)) == 4


def test_make_message_checks_inputs(small_cfg, rng):
    with pytest.raises(ProtocolError):
        make_message(3, small_cfg.modulus.zeros(4), small_cfg, rng)
    with pytest.raises(ProtocolError):
        make_message(1, small_cfg.modulus.zeros(3), small_cfg, rng)


def test_malformed_previous_message():
    F = FieldModulus(7)
    with pytest.raises(MalformedMessageError, match="malformed previous message"):
        IterMessage(F.vector([1, 1]), F.zeros(2)).chosen_index
    with pytest.raises(MalformedMessageError):
        IterMessage(F.vector([2, 3]), F.zeros(2)).chosen_index


def test_constant_alpha_variant_zeroes_other_rows(small_cfg, rng):
    m = make_message(2, small_cfg.modulus.zeros(4), small_cfg, rng, Variant.CONSTANT_ALPHA)
    assert vec_values(m.alpha) == (0, 1)


# =============================================================================
# ÁLGEBRA DE ATUALIZAÇÃO
# =============================================================================
def test_one_iteration_updates_only_the_chosen_row(small_cfg, rng):
    F = small_cfg.modulus
    initial = random_params(small_cfg, 3)
    states, oracle = bootstrap(small_cfg, initial)
    assert oracle.message.chosen_index == 1
    assert states[0].share.iteration == 0 and states[0].encoded.iteration == 1

    d = 2
    row = recover_plain(states[0].encoded.rows[d - 1], oracle.message, d)
    assert row == initial[d - 1]
    delta = F.vector([5, 0, 7, 1])
    m = make_message(d, delta, small_cfg, rng)
    bundle = compute_upload(m, oracle.message)
    share = ExclusiveShare(1, states[0].share.symbols, 1)
    new = db_apply_upload(states[0], bundle, share)

    expected = (initial[0], vec_add(initial[1], delta))
    assert demask(new.encoded, m) == expected
    assert new.encoded.iteration == 2
    assert states[0].encoded.iteration == 1


def test_recover_plain_on_the_previous_row_is_identity(small_cfg):
    F = small_cfg.modulus
    m_prev = IterMessage(F.vector([1, 9]), F.vector([3, 3, 3, 3]))
    row = F.vector([1, 2, 3, 4])
    assert recover_plain(row, m_prev, 1) == row
    assert vec_values(recover_plain(row, m_prev, 2)) == tuple((x - 27) % F.q for x in (1, 2, 3, 4))


def test_unmasked_upload_reveals_the_chosen_row(small_cfg, rng):
    F = small_cfg.modulus
    _, oracle = bootstrap(small_cfg, random_params(small_cfg, 0))
    m = make_message(2, F.vector([1, 2, 3, 4]), small_cfg, rng)
    bundle = compute_upload(m, oracle.message, Variant.UNMASKED_UPLOAD)
    assert vec_values(bundle.combos[0]) == (0, 0, 0, 0)
    assert vec_values(bundle.combos[1]) == (1, 2, 3, 4)


def test_apply_upload_rejects_mismatched_shares(small_cfg):
    states, _ = bootstrap(small_cfg, random_params(small_cfg, 0))
    F = small_cfg.modulus
    bundle = UploadBundle((F.zeros(4), F.zeros(4)))
    with pytest.raises(ProtocolError, match="sent to database"):
        db_apply_upload(states[0], bundle, ExclusiveShare(2, states[1].share.symbols, 1))
    with pytest.raises(ProtocolError, match="labelled iteration"):
        db_apply_upload(states[0], bundle, ExclusiveShare(1, states[0].share.symbols, 0))
    with pytest.raises(ProtocolError, match="bundle"):
        db_apply_upload(states[0], UploadBundle((F.zeros(4),)), ExclusiveShare(1, states[0].share.symbols, 1))


def test_bundle_wire_format(small_cfg):
    F = small_cfg.modulus
    bundle = UploadBundle((F.vector([1, 2, 3, 4]), F.vector([5, 6, 7, 8])))
    data = encode_bundle(bundle)
    assert len(data) == 6 + 32
    assert decode_bundle(data, F) == bundle
    with pytest.raises(ProtocolError):
        decode_bundle(data[:3], F)


# =============================================================================
# BANCO DE DADOS
# =============================================================================
def test_database_rejects_combos_without_a_staged_share(small_cfg):
    states, _ = bootstrap(small_cfg, random_params(small_cfg, 0))
    db = DatabaseServer(small_cfg, states[0])
    payload = encode_bundle(UploadBundle((small_cfg.modulus.zeros(4),) * 2))
    reply = frame_decode(db.handle(frame_encode(MessageKind.UPLOAD_COMBOS, payload)))
    assert reply.kind == MessageKind.ERROR
    assert b"staged" in reply.payload
    assert db.state is states[0]


def test_database_answers_garbage_with_an_error_frame(small_cfg):
    states, _ = bootstrap(small_cfg, random_params(small_cfg, 0))
    db = DatabaseServer(small_cfg, states[0])
    assert frame_decode(db.handle(b"\x00\x00")).kind == MessageKind.ERROR
    assert frame_decode(db.handle(frame_encode(MessageKind.ACK))).kind == MessageKind.ERROR


def test_database_rejects_shares_of_other_databases(small_cfg):
    states, _ = bootstrap(small_cfg, random_params(small_cfg, 0))
    db = DatabaseServer(small_cfg, states[0])
    wrong = ExclusiveShare(2, states[1].share.symbols, 1)
    reply = frame_decode(db.handle(frame_encode(MessageKind.UPLOAD_SHARE, encode_share(wrong))))
    assert reply.kind == MessageKind.ERROR


# =============================================================================
# MÁQUINA LOCAL
# =============================================================================
def make_machine(cfg, seed=5, handlers=None):
    states, _ = bootstrap(cfg, random_params(cfg, seed))
    dbs = [DatabaseServer(cfg, st) for st in states]
    channel = SimulatedChannel(handlers(dbs) if handlers else [db.handle for db in dbs])
    machine = LocalMachine(cfg, channel, TrainerOracle(PSEUDORANDOM, seed, cfg.modulus), np.random.default_rng(seed))
    return machine, dbs


def test_iteration_ledger_matches_closed_form(small_cfg):
    machine, dbs = make_machine(small_cfg)
    result = machine.run_iteration(2)
    assert result.iteration == 1 and result.chosen == 2
    assert assert_ledger(result.ledger, 2, 2, 4, PROPOSED).passed
    assert result.ledger.download == 12 and result.ledger.upload == 22
    assert all(db.iteration == 2 for db in dbs)


def test_machine_learns_iteration_from_the_shares(small_cfg):
    machine, dbs = make_machine(small_cfg)
    for expected in (1, 2, 3):
        assert machine.run_iteration(1).iteration == expected
    download = machine.lm_download(2)
    assert download.iteration == 4
    assert download.m_prev.chosen_index == 1


def test_download_failure_aborts_without_commits(small_cfg):
    def broken(dbs):
        return [dbs[0].handle, lambda frame: error_frame("offline")]

    machine, dbs = make_machine(small_cfg, handlers=broken)
    with pytest.raises(IterationAborted) as exc:
        machine.run_iteration(1)
    assert exc.value.phase == "download"
    assert len(dbs[0].history) == 1


def test_rejected_share_aborts_before_any_commit(small_cfg):
    def reject_shares(dbs):
        def handler(frame):
            if frame_decode(frame).kind == MessageKind.UPLOAD_SHARE:
                return error_frame("disk full")
            return dbs[1].handle(frame)

        return [dbs[0].handle, handler]

    machine, dbs = make_machine(small_cfg, handlers=reject_shares)
    with pytest.raises(IterationAborted) as exc:
        machine.run_iteration(2)
    assert exc.value.phase == "upload"
    assert [len(db.history) for db in dbs] == [1, 1]


def test_commit_failure_is_reported_as_partial(small_cfg):
    def reject_combos(dbs):
        def handler(frame):
            if frame_decode(frame).kind == MessageKind.UPLOAD_COMBOS:
                return error_frame("disk full")
            return dbs[1].handle(frame)

        return [dbs[0].handle, handler]

    machine, dbs = make_machine(small_cfg, handlers=reject_combos)
    with pytest.raises(IterationAborted) as exc:
        machine.run_iteration(1)
    assert exc.value.phase == "commit"
    # the first database acked before the second refused
    assert [len(db.history) for db in dbs] == [2, 1]


def test_short_share_response_aborts_the_download(small_cfg):
    def short_share(dbs):
        def handler(frame):
            if frame_decode(frame).kind == MessageKind.GET_SHARE:
                return frame_encode(MessageKind.SHARE_RESP, b"\x01")
            return dbs[1].handle(frame)

        return [dbs[0].handle, handler]

    machine, dbs = make_machine(small_cfg, handlers=short_share)
    with pytest.raises(IterationAborted) as exc:
        machine.run_iteration(1)
    assert exc.value.phase == "download"
    assert [len(db.history) for db in dbs] == [1, 1]


def test_bad_submodel_index_aborts(small_cfg):
    machine, _ = make_machine(small_cfg)
    with pytest.raises(IterationAborted):
        machine.run_iteration(3)


# =============================================================================
# TREINADOR
# =============================================================================
def test_trainers_are_deterministic(small_cfg):
    F = small_cfg.modulus
    row = F.vector([1, 2, 3, 4])
    for kind in (PSEUDORANDOM, TOY_LEAST_SQUARES):
        a, b = TrainerOracle(kind, 9, F), TrainerOracle(kind, 9, F)
        assert a(row, 1) == b(row, 1)
        assert a.calls == 1
    assert TrainerOracle(PSEUDORANDOM, 9, F)(row, 1) != TrainerOracle(PSEUDORANDOM, 9, F)(row, 2)


def test_unknown_trainer_kind():
    with pytest.raises(TrainerError):
        TrainerOracle("sgd", 0, FieldModulus(7))


# =============================================================================
# SIMULAÇÃO
# =============================================================================
def test_reference_model_trains_one_row(small_cfg):
    initial = random_params(small_cfg, 1)
    ref = ReferenceModel(initial, TrainerOracle(PSEUDORANDOM, 1, small_cfg.modulus))
    ref.step(2, 1)
    assert ref.matrix[0] == initial[0]
    assert ref.matrix[1] != initial[1]


def test_schedule_is_seeded():
    assert seeded_schedule(4, 3, 10) == seeded_schedule(4, 3, 10)
    assert all(1 <= d <= 3 for d in seeded_schedule(4, 3, 10))


@pytest.mark.parametrize("trainer", [PSEUDORANDOM, TOY_LEAST_SQUARES])
def test_simulation_matches_the_reference(small_cfg, trainer):
    sim = Simulation(small_cfg, seed=7, trainer_kind=trainer)
    report = sim.run(4, schedule=[1, 1, 2, 1])
    assert len(report.iterations) == 4
    assert sim.demasked() == sim.reference.matrix
    assert assert_ledger(report.total, 2, 2, 4, PROPOSED, iterations=4).passed


@pytest.mark.parametrize(
    "n,r,s,q,balanced",
    [(2, 2, 8, 65537, False), (2, 3, 8, 65537, True), (3, 1, 3, 65537, True), (2, 4, 16, 65537, False), (2, 2, 4, 3, False)],
)
def test_simulation_grid(n, r, s, q, balanced):
    cfg = ProtocolConfig.build(n, r, s, q, mixing_kind="auto", balanced_shares=balanced)
    report = Simulation(cfg, seed=n * 100 + r).run(3)
    assert assert_ledger(report.total, n, r, s, PROPOSED, iterations=3).passed


def test_broken_variants_still_run(small_cfg):
    for variant in (Variant.UNMASKED_UPLOAD, Variant.CONSTANT_ALPHA):
        sim = Simulation(small_cfg, seed=2, variant=variant)
        assert not sim.check
        sim.run(2, schedule=[2, 1])
