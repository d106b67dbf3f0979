import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from shield.core import OutcomeDistribution, PolyParam, VoteHistogram, parse_poly
from shield.distribution import output_distribution
from shield.privacy import (AdjacencySet, MomentsLedger, account, delta_for_epsilon,
                            exact_argmax_privacy, log_fraction, moment, privacy_loss,
                            query_alpha, query_alphas, solve_epsilon)

F = Fraction


def dist(*probs, fail=0):
    return OutcomeDistribution(tuple(F(p) for p in probs), F(fail))


def test_privacy_loss_ratio():
    d, d2 = dist("3/4", "1/4"), dist("1/2", "1/2")
    assert privacy_loss(d, d2, 1) == pytest.approx(math.log(1.5), abs=1e-15)
    assert privacy_loss(d, d, 2) == 0


def test_privacy_loss_unbounded_support():
    d, d2 = dist(1, 0), dist("1/2", "1/2")
    assert privacy_loss(d, d2, 2) == -math.inf
    assert privacy_loss(d2, d, 2) == math.inf


def test_moment_hand_sum():
    d, d2 = dist("3/4", "1/4"), dist("1/2", "1/2")
    assert moment(d, d2, 1) == pytest.approx(math.log(1.25), abs=1e-15)
    assert moment(d, d, 7) == 0
    assert moment(dist("1/2", "1/2"), dist(1, 0), 1) == math.inf
    with pytest.raises(ValueError):
        moment(d, d2, 0)


def test_equal_fail_mass_is_inert():
    d = dist("1/2", "1/4", fail="1/4")
    d2 = dist("1/4", "1/2", fail="1/4")
    expected = F(1, 2) * 2 ** 2 + F(1, 4) * F(1, 2) ** 2 + F(1, 4)
    assert moment(d, d2, 2) == pytest.approx(math.log(expected), abs=1e-15)


def test_log_fraction_huge_and_tiny():
    assert log_fraction(F(10) ** 400) == pytest.approx(400 * math.log(10), rel=1e-15)
    assert log_fraction(F(1, 10 ** 400)) == pytest.approx(-400 * math.log(10), rel=1e-15)
    assert log_fraction(1 + F(1, 10 ** 30)) == pytest.approx(1e-30, rel=1e-12)


def test_adjacency_set_shape():
    h = VoteHistogram((2, 0, 1), offset=1)
    adj = AdjacencySet.of(h)
    assert len(adj.neighbors) == 2 * 2
    for nb, (k1, k2) in zip(adj.neighbors, adj.moves):
        assert nb.counts[k1 - 1] == h.counts[k1 - 1] - 1
        assert nb.counts[k2 - 1] == h.counts[k2 - 1] + 1
        assert nb.offset == h.offset


def test_offset_makes_alpha_finite():
    assert all(math.isfinite(a) for a in query_alphas(VoteHistogram((6, 0, 0), 1), parse_poly("X^2+X")))


def test_three_one_without_offset_is_infinite():
    # moving the lone class-2 vote empties class 2, which d still outputs
    assert query_alpha(VoteHistogram((3, 1), 0), parse_poly("X"), 1) == math.inf


def test_unanimous_without_offset_direction():
    h = VoteHistogram((5, 0, 0), 0)
    poly = parse_poly("X^2+X")
    assert math.isfinite(query_alpha(h, poly, 1))
    assert query_alpha(h, poly, 1, symmetric=True) == math.inf


def test_float_path_matches_exact():
    h = VoteHistogram((7, 3, 1, 0), 1)
    poly = parse_poly("2X^3+3X^2+X")
    exact = query_alphas(h, poly)
    approx = query_alphas(h, poly, exact=False)
    for a, b in zip(exact, approx):
        assert b == pytest.approx(a, rel=1e-9, abs=1e-12)


def test_pure_dp_ledger_recovers_cost():
    c = 0.7
    ledger = MomentsLedger(tuple(range(1, 33)))
    ledger.add([l * c for l in ledger.orders])
    eps, order = solve_epsilon(ledger, 1e-5)
    assert order == 32
    assert eps == pytest.approx(c - math.log(1e-5) / 32)


def test_zero_ledger_is_grid_bound():
    ledger = MomentsLedger((1, 2, 4))
    ledger.add([0.0, 0.0, 0.0])
    assert solve_epsilon(ledger, 1e-5)[0] == pytest.approx(-math.log(1e-5) / 4)


def test_empty_ledger_raises():
    with pytest.raises(Exception):
        MomentsLedger().composed()


def test_negative_alpha_rejected():
    ledger = MomentsLedger((1,))
    with pytest.raises(AssertionError):
        ledger.add([-0.1])


@pytest.mark.parametrize("counts, margin, eps, tie", [
    ((5, 3), 2, 0.0, False),
    ((5, 4), 1, math.inf, False),
    ((4, 4, 1), 0, math.inf, True),
])
def test_exact_argmax_privacy(counts, margin, eps, tie):
    r = exact_argmax_privacy(VoteHistogram(counts, 7))
    assert (r.margin, r.epsilon, r.tie, r.highly_dominant) == (margin, eps, tie, margin >= 2)


def test_account_single_query_and_modes():
    hists = [VoteHistogram((5, 2, 1), 1), VoteHistogram((3, 3, 2), 1)]
    poly = parse_poly("X^2+X")
    one = account(hists, poly, queries=1)
    alone = account(hists[:1], poly)
    assert one.epsilon == alone.epsilon
    both = account(hists, poly)
    assert both.epsilon > one.epsilon
    sym = account(hists, poly, mode="symmetric")
    assert sym.epsilon >= both.epsilon
    compat = account(hists, poly, mode="compat", queries=100)
    assert compat.headline_epsilon == compat.compat_mean_epsilon
    with pytest.raises(Exception):
        account(hists, poly, queries=3)


probs_st = st.lists(st.integers(1, 20), min_size=3, max_size=6)


@given(probs_st, probs_st.map(lambda x: x), st.integers(1, 8), st.data())
def test_post_processing_merge_never_increases_moment(a, b, l, data):
    n = min(len(a), len(b))
    a, b = a[:n], b[:n]
    d = OutcomeDistribution(tuple(F(x, sum(a)) for x in a), F(0))
    d2 = OutcomeDistribution(tuple(F(x, sum(b)) for x in b), F(0))
    i = data.draw(st.integers(0, n - 2))

    def merge(dd):
        p = list(dd.probs)
        p[i] += p.pop(i + 1)
        return OutcomeDistribution(tuple(p), F(0))

    assert moment(merge(d), merge(d2), l) <= moment(d, d2, l) + 1e-12


hist_st = st.lists(st.integers(0, 5), min_size=2, max_size=4).filter(lambda c: sum(c) > 1)


@given(hist_st, st.dictionaries(st.integers(1, 3), st.integers(1, 2), min_size=1, max_size=3))
def test_alpha_nonnegative_and_monotone_in_order(counts, coeffs):
    alphas = query_alphas(VoteHistogram(tuple(counts), 1), PolyParam(coeffs), range(1, 9))
    assert all(a >= 0 for a in alphas)
    assert all(x <= y + 1e-12 for x, y in zip(alphas, alphas[1:]))


@given(st.lists(st.floats(0, 5), min_size=4, max_size=4))
def test_solve_epsilon_monotone_in_delta(base):
    ledger = MomentsLedger((1, 2, 3, 4))
    ledger.add(sorted(base))
    eps = [solve_epsilon(ledger, d)[0] for d in (1e-8, 1e-5, 1e-3, 0.1)]
    assert all(x >= y for x, y in zip(eps, eps[1:]))
    for d, e in zip((1e-8, 1e-5, 1e-3, 0.1), eps):
        assert delta_for_epsilon(ledger, e) <= d * (1 + 1e-9)
