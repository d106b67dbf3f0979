from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from shield.core import PolyParam, ValidationError, VoteHistogram, VoteMatrix, parse_poly
from shield.distribution import (distribution_for_rounds, exact_argmax_accuracy,
                                 exact_argmax_distribution, gta, mean_metrics,
                                 output_distribution)

F = Fraction


def test_degree_one_returns_frequencies():
    h = VoteHistogram((3, 1, 0), offset=1)
    d = output_distribution(h, parse_poly("X"))
    assert d.probs == h.frequencies and d.fail == 0


def test_two_class_hand_example():
    # freqs (3/4, 1/4): X^2 round gives 9/16, 1/16, then X takes the rest
    h = VoteHistogram((3, 1), offset=0)
    d = output_distribution(h, parse_poly("X^2+X"))
    assert d.probs == (F(27, 32), F(5, 32)) and d.fail == 0
    assert gta(h, parse_poly("X^2+X")) == F(3, 4) * F(27, 32) + F(1, 4) * F(5, 32)


def test_failure_mass_without_linear_term():
    d = output_distribution(VoteHistogram((1, 1), offset=0), parse_poly("X^2"))
    assert d.probs == (F(1, 4), F(1, 4)) and d.fail == F(1, 2)


def test_unanimous_gta_is_one():
    h = VoteHistogram((5, 0, 0), offset=0)
    for text in ("X", "X^2+X", "6X^4+6X^3+4X^2+X"):
        assert gta(h, parse_poly(text)) == 1


def test_round_order_matters_for_recursion():
    freqs = (F(2, 3), F(1, 3))
    a = distribution_for_rounds(freqs, (2, 1))
    b = distribution_for_rounds(freqs, (1, 2))
    assert b.probs == freqs          # a leading linear round always succeeds
    assert a.probs != b.probs


def test_exact_argmax_ties_go_low():
    d = exact_argmax_distribution(VoteHistogram((2, 3, 3), offset=5))
    assert d.probs == (0, 1, 0)
    # accuracy counts every tied class as correct
    assert exact_argmax_accuracy(VoteHistogram((2, 3, 3)), None) == 1


def test_gta_dummy_weighting_switch():
    h = VoteHistogram((2, 0), offset=1)
    poly = parse_poly("X")
    assert gta(h, poly) == F(3, 4)
    assert gta(h, poly, include_dummies=True) == F(3, 4) ** 2 + F(1, 4) ** 2


def test_mean_metrics_with_truth():
    m = VoteMatrix.from_labels([[1, 1, 2], [2, 2, 2]], 2)
    mm = mean_metrics(m, parse_poly("X"), offset=0, truth=[1, 2])
    assert mm.gta == (F(5, 9) + 1) / 2
    assert mm.expected_correct == F(2, 3) + 1
    with pytest.raises(ValidationError):
        mean_metrics(m, parse_poly("X"), truth=[1])


hist_st = st.lists(st.integers(0, 6), min_size=2, max_size=5).filter(lambda c: sum(c) > 0)
poly_st = st.dictionaries(st.integers(1, 4), st.integers(1, 3), min_size=1, max_size=4)


@given(hist_st, poly_st, st.integers(0, 2))
def test_distribution_invariants(counts, coeffs, offset):
    h = VoteHistogram(tuple(counts), offset)
    poly = PolyParam(coeffs)
    d = output_distribution(h, poly)
    assert sum(d.probs) + d.fail == 1
    assert all(p >= 0 for p in d.probs)
    if poly.never_fails:
        assert d.fail == 0
    for k, n in enumerate(h.augmented):
        if n == 0:
            assert d.probs[k] == 0
    # a larger augmented count never gets a smaller probability
    order = sorted(range(len(counts)), key=lambda k: h.augmented[k])
    probs = [d.probs[k] for k in order]
    assert probs == sorted(probs)


@given(hist_st, poly_st)
def test_gta_bounded_by_exact_argmax(counts, coeffs):
    h = VoteHistogram(tuple(counts), 1)
    assert 0 <= gta(h, PolyParam(coeffs)) <= gta(h, None)
