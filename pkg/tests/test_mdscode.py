import pytest

from field.field import FieldModulus, vec_values
from mdscode.mdscode import (
    DENSE,
    VANDERMONDE,
    ExclusiveShare,
    IncompleteShareSetError,
    MdsError,
    OpCounter,
    build_dense_matrix,
    build_mixing_matrix,
    decode_share,
    default_mixing_matrix,
    encode_share,
    join_shares,
    mds_decode,
    mds_encode,
    share_bounds,
    split_shares,
)

F = FieldModulus(65537)


# =============================================================================
# MATRIZ DE MISTURA
# =============================================================================
def test_vandermonde_is_invertible_and_non_systematic():
    m = default_mixing_matrix(6, F)
    assert m.kind == VANDERMONDE
    assert m.points == (1, 2, 3, 4, 5, 6)
    assert m.block_rank(range(6)) == 6
    assert all(sum(1 for x in row if x) > 1 for row in m.rows()[1:])
    assert m.rows()[0] == (1, 1, 1, 1, 1, 1)


def test_vandermonde_entries():
    m = build_mixing_matrix(3, F.vector([2, 3, 5]))
    assert m.rows() == [(1, 1, 1), (2, 3, 5), (4, 9, 25)]


def test_duplicate_points_rejected():
    with pytest.raises(MdsError, match="distinct"):
        build_mixing_matrix(3, F.vector([1, 1, 2]))


def test_dimension_one_is_systematic():
    with pytest.raises(MdsError, match="systematic"):
        build_mixing_matrix(1, F.vector([1]))


def test_small_field_needs_dense_matrix():
    F3 = FieldModulus(3)
    with pytest.raises(MdsError):
        default_mixing_matrix(6, F3)
    m = build_dense_matrix(6, F3)
    assert m.kind == DENSE
    assert m.points == (1,)
    rows = m.rows()
    assert all(rows[i][j] == (2 if i == j else 1) for i in range(6) for j in range(6))


def test_any_n_rows_have_full_rank():
    m = default_mixing_matrix(6, F)
    assert m.block_rank([0, 1, 2]) == 3
    assert m.block_rank([3, 4, 5]) == 3
    assert m.block_rank([]) == 0


# =============================================================================
# CODIFICAÇÃO
# =============================================================================
@pytest.mark.parametrize("q,kind", [(65537, VANDERMONDE), (3, DENSE), (7, VANDERMONDE)])
def test_decode_inverts_encode(q, kind, rng):
    mod = FieldModulus(q)
    m = default_mixing_matrix(6, mod, kind)
    for _ in range(10):
        message = mod.vector(int(x) for x in rng.integers(0, q, size=6))
        assert mds_decode(mds_encode(message, m), m) == message


def test_codeword_is_not_the_message():
    m = default_mixing_matrix(6, F)
    message = F.vector([0, 1, 0, 0, 0, 0])
    assert vec_values(mds_encode(message, m)) == (1, 2, 4, 8, 16, 32)


def test_length_mismatch_rejected():
    m = default_mixing_matrix(6, F)
    with pytest.raises(MdsError, match="length mismatch"):
        mds_encode(F.zeros(5), m)


def test_counter_tracks_codec_calls():
    m = default_mixing_matrix(6, F)
    counter = OpCounter()
    codeword = mds_encode(F.zeros(6), m, counter)
    mds_decode(codeword, m, counter)
    assert (counter.encode_ops, counter.decode_ops) == (1, 1)
    assert counter.encode_macs == counter.decode_macs == 36


# =============================================================================
# PARTES EXCLUSIVAS
# =============================================================================
def test_share_bounds():
    assert share_bounds(6, 2) == [(0, 3), (3, 6)]
    assert share_bounds(7, 2, balanced=True) == [(0, 4), (4, 7)]
    with pytest.raises(MdsError, match="does not divide"):
        share_bounds(7, 2)


def test_split_then_join_recovers_codeword():
    codeword = F.vector(range(10, 16))
    shares = split_shares(codeword, 3, iteration=4)
    assert [s.db_index for s in shares] == [1, 2, 3]
    assert all(len(s.symbols) == 2 and s.iteration == 4 for s in shares)
    assert join_shares(list(reversed(shares)), 3) == codeword


def test_incomplete_share_sets_rejected():
    shares = split_shares(F.vector(range(6)), 2, iteration=1)
    with pytest.raises(IncompleteShareSetError, match="incomplete share set"):
        join_shares(shares[:1], 2)
    stale = ExclusiveShare(2, shares[1].symbols, 0)
    with pytest.raises(IncompleteShareSetError, match="different iterations"):
        join_shares([shares[0], stale], 2)


def test_share_wire_format():
    share = ExclusiveShare(2, F.vector([7, 8, 9]), 5)
    data = encode_share(share)
    assert len(data) == 13 + 12
    assert decode_share(data, F) == share
    with pytest.raises(MdsError):
        decode_share(data[:-2], F)
    with pytest.raises(MdsError, match="truncated"):
        decode_share(data[:5], F)
