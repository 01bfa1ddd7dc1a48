import numpy as np
import pytest
from hypothesis import given, strategies as st

from ctcsim.core import (DEFAULT_SCHEME, MaskedPosteriorSeq, SeedSpec, Vocab, WerBinScheme,
                         as_transcript, one_hot, renormalize, validate_posterior_seq)


def test_validate_ok_and_violation():
    assert validate_posterior_seq(np.array([[0.2, 0.5, 0.3], [1, 0, 0]])) is None
    bad = validate_posterior_seq(np.array([[0.2, 0.5, 0.4]]))
    assert bad.frame == 0
    assert bad.value == pytest.approx(1.1)
    assert validate_posterior_seq(np.zeros((0, 3))) is None


def test_validate_reports_first_bad_frame():
    P = np.array([[1.0, 0.0], [0.5, 0.5], [-0.1, 1.1]])
    assert validate_posterior_seq(P).frame == 2


def test_one_hot():
    np.testing.assert_array_equal(one_hot(1, 3), [0, 1, 0])
    np.testing.assert_array_equal(one_hot(0, 2), [1, 0])
    with pytest.raises(ValueError):
        one_hot(5, 3)


def test_vocab_invariants():
    Vocab(2)
    with pytest.raises(ValueError):
        Vocab(1)
    with pytest.raises(ValueError):
        Vocab(3, blank_id=3)


def test_transcript_rejects_blank_and_range():
    with pytest.raises(ValueError):
        as_transcript([1, 0, 2], 4)
    with pytest.raises(ValueError):
        as_transcript([4], 4)
    with pytest.raises(ValueError):
        as_transcript([], 4)


def test_bin_scheme_parse_and_invariants():
    s = WerBinScheme.parse("0-6,10-40,50-150")
    assert s == DEFAULT_SCHEME and s.K == 3
    assert WerBinScheme.parse(s.format()) == s
    with pytest.raises(ValueError):
        WerBinScheme(((0, 10), (5, 20)))
    with pytest.raises(ValueError):
        WerBinScheme(((10, 20), (0, 5)))
    with pytest.raises(ValueError):
        WerBinScheme(((-1, 5),))


def test_masked_seq_properties():
    m = MaskedPosteriorSeq(np.eye(2)[[1, 1, 0, 0]], np.array([1, 1, 0, 0]))
    assert m.valid_len == 2 and m.T_train == 4 and m.valid.shape == (2, 2)


def test_seed_streams_are_order_independent():
    s = SeedSpec(99)
    forward = [s.rng(3, i, j).random() for i in range(3) for j in range(2)]
    backward = [s.rng(3, i, j).random() for i in reversed(range(3)) for j in reversed(range(2))]
    assert forward == backward[::-1]


def test_seed_streams_do_not_collide_on_trailing_zero():
    s = SeedSpec(7)
    assert s.rng(3, 1).random() != s.rng(3, 1, 0).random()


@given(st.lists(st.lists(st.floats(0.01, 10.0), min_size=2, max_size=5), min_size=1, max_size=5))
def test_renormalize_lands_on_simplex(rows):
    width = min(len(r) for r in rows)
    P = renormalize(np.array([r[:width] for r in rows]))
    assert validate_posterior_seq(P, 1e-12) is None
