import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cocyclelab import symbolic as S
from cocyclelab.errors import ValidationError
from cocyclelab.symbolic import (MarkovBase, TwoSidedWord, Word, birkhoff_average, decode_words,
                                 periodic_word, read_orbit, sample_orbit, shift_distance,
                                 sliding_codes, splice_homoclinic, word_code, write_orbit)

words = st.lists(st.integers(0, 2), min_size=1, max_size=8)


@given(words)
def test_word_code_roundtrip(w):
    code = word_code(w, 3)
    assert decode_words(np.array([code]), 3, len(w))[0].tolist() == w


def test_sliding_codes_matches_word_code():
    seq = np.array([0, 1, 1, 0, 1, 0, 0])
    codes = sliding_codes(seq, 2, 3)
    assert codes.tolist() == [word_code(seq[i:i + 3], 2) for i in range(5)]


def test_word_parse_and_str():
    assert Word.parse("0110").symbols == (0, 1, 1, 0)
    assert Word.parse("10 11 2").symbols == (10, 11, 2)
    assert str(Word((0, 1))) == "01"
    with pytest.raises(ValidationError):
        Word((0,), "sideways")


def test_two_sided_indexing_and_shift():
    x = TwoSidedWord.from_sequence([5, 6, 7, 8, 9], origin=2)
    assert (x[-2], x[0], x[2]) == (5, 7, 9)
    assert (x.lo, x.hi) == (-2, 2)
    y = x.shift(1)
    assert y[0] == 8 and y[-3] == 5
    with pytest.raises(ValidationError):
        x.shift(3)


def test_shift_distance_values():
    x = TwoSidedWord.from_sequence([0, 0, 0, 0, 0, 0, 0], 3)
    y = TwoSidedWord.from_sequence([0, 0, 0, 0, 0, 1, 0], 3)
    z = TwoSidedWord.from_sequence([1, 0, 0, 0, 0, 0, 0], 3)
    assert shift_distance(x, y) == 0.25
    assert shift_distance(x, z) == 0.125
    assert shift_distance(x, x) == 2.0**-4
    a = periodic_word((0, 1), 8)
    assert shift_distance(a, a) == 0.0


@given(st.lists(st.integers(0, 1), min_size=9, max_size=9),
       st.lists(st.integers(0, 1), min_size=9, max_size=9),
       st.lists(st.integers(0, 1), min_size=9, max_size=9))
def test_shift_distance_is_ultrametric(a, b, c):
    x, y, z = (TwoSidedWord.from_sequence(s, 4) for s in (a, b, c))
    dxy, dyz, dxz = shift_distance(x, y), shift_distance(y, z), shift_distance(x, z)
    assert dxy == shift_distance(y, x)
    assert dxz <= max(dxy, dyz)


def test_chain_stationary_closed_form():
    base = MarkovBase.chain([[0.9, 0.1], [0.2, 0.8]])
    np.testing.assert_allclose(base.stationary, [2 / 3, 1 / 3], atol=1e-14)


def test_bad_row_is_named():
    with pytest.raises(ValidationError, match="row 1"):
        MarkovBase.chain([[0.5, 0.5], [0.6, 0.3]])


def test_reducible_or_periodic_chain_rejected():
    with pytest.raises(ValidationError):
        MarkovBase.chain([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ValidationError):
        MarkovBase.chain([[1.0, 0.0], [0.0, 1.0]])


def test_legality_respects_forbidden_transitions():
    base = MarkovBase.chain([[0.5, 0.5], [1.0, 0.0]])  # golden mean shift
    assert base.is_legal([0, 1, 0, 0, 1])
    assert not base.is_legal([0, 1, 1])
    assert base.is_cyclically_legal((0, 1))
    assert not base.is_cyclically_legal((1,))
    with pytest.raises(ValidationError):
        periodic_word((1,), base=base)


def test_word_probabilities_sum_and_memory_two():
    trans = np.array([[0.3, 0.7], [0.6, 0.4], [0.5, 0.5], [0.1, 0.9]])
    base = MarkovBase(2, 2, trans)
    for k in range(0, 6):
        _, p = base.word_probabilities(k)
        assert p.sum() == pytest.approx(1.0, abs=1e-13)
    # stationarity: marginal of the last two symbols equals the memory law
    _, p3 = base.word_probabilities(3)
    np.testing.assert_allclose(p3.reshape(2, 4).sum(axis=0), base.stationary, atol=1e-14)


def test_lifted_chain_is_stochastic():
    base = MarkovBase.chain([[0.5, 0.5], [1.0, 0.0]])
    ch = base.lifted(3)
    P = ch.matrix()
    np.testing.assert_allclose(P.sum(axis=1), 1.0)
    np.testing.assert_allclose(ch.stationary @ P, ch.stationary, atol=1e-14)
    assert ch.n_states == 5  # legal length-3 words of the golden mean shift


def test_sample_frequencies(rng):
    base = MarkovBase.chain([[0.9, 0.1], [0.2, 0.8]])
    paths = base.sample_paths(64, 4000, rng)
    assert abs(paths.mean() - 1 / 3) < 0.01
    pair = (paths[:, :-1] == 0) & (paths[:, 1:] == 1)
    assert abs(pair.mean() - 2 / 3 * 0.1) < 0.005


@given(st.integers(0, 2**31), st.integers(1, 12))
def test_scalar_sampling_path_matches_vector_path(seed, n_paths):
    base = MarkovBase(3, 2, np.random.default_rng(7).dirichlet([1, 1, 1], 9))
    a = base.sample_paths(n_paths, 300, np.random.default_rng(seed))
    old = S.SCALAR_PATHS
    try:
        S.SCALAR_PATHS = 0
        b = base.sample_paths(n_paths, 300, np.random.default_rng(seed))
    finally:
        S.SCALAR_PATHS = old
    np.testing.assert_array_equal(a, b)


def test_sample_orbit_is_seeded(tmp_path):
    base = MarkovBase.chain([[0.9, 0.1], [0.2, 0.8]])
    o1, o2 = sample_orbit(base, 500, seed=3), sample_orbit(base, 500, seed=3)
    np.testing.assert_array_equal(o1.symbols, o2.symbols)
    assert len(o1) == 500
    write_orbit(tmp_path / "orbit.txt", o1)
    np.testing.assert_array_equal(read_orbit(tmp_path / "orbit.txt"), o1.recorded)


def test_splice_homoclinic_structure():
    h = splice_homoclinic((0, 1), (1, 1, 0), span=8)
    assert h.l == 4
    z, a = h.z, h.a
    for i in range(a.lo, 1):
        assert z[i] == a[i]
    for i in range(0, 10):
        assert z[h.l + i] == a[i]
    assert splice_homoclinic((0, 1), ()).l == 0


def test_splice_rejects_illegal_junction():
    base = MarkovBase.chain([[0.5, 0.5], [1.0, 0.0]])
    with pytest.raises(ValidationError):
        splice_homoclinic((0,), (1, 1), base)


def test_birkhoff_periodic_exact():
    a = periodic_word((0, 1, 1), 4)
    f = np.array([1.0, 2.0, 3.0, 4.0])  # depth-2 table indexed by word code
    # cyclic windows 01, 11, 10 -> codes 1, 3, 2
    assert birkhoff_average(a, f, depth=2, n_symbols=2, period=3) == pytest.approx(3.0)


def test_birkhoff_orbit_converges():
    base = MarkovBase.chain([[0.9, 0.1], [0.2, 0.8]])
    orb = sample_orbit(base, 200_000, seed=11)
    assert birkhoff_average(orb, np.array([0.0, 1.0])) == pytest.approx(1 / 3, abs=0.01)
