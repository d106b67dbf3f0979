import math
from math import comb

import pytest
from hypothesis import given, strategies as st

from shield.core import ValidationError, VoteHistogram, parse_poly
from shield.explorer import (ParetoPoint, enumerate_polys, evaluate_space, pareto_front,
                             poly_key)
from shield.distribution import gta


@pytest.mark.parametrize("degree, bound", [(1, 3), (2, 2), (3, 5), (4, 6), (4, 12)])
def test_enumeration_count_is_stars_and_bars(degree, bound):
    polys = enumerate_polys(degree, bound)
    assert len(polys) == comb(bound + degree, degree) - 1
    assert len(set(polys)) == len(polys)
    assert all(p.degree <= degree and p.num_rounds <= bound for p in polys)


def test_small_enumeration_lists():
    assert sorted(str(p) for p in enumerate_polys(1, 3)) == ["2X", "3X", "X"]
    assert sorted(map(str, enumerate_polys(2, 2))) == sorted(["X", "2X", "X^2", "2X^2", "X^2+X"])


def test_require_a1_filter():
    polys = enumerate_polys(3, 4, require_a1=True)
    assert polys and all(p.coeff(1) == 1 for p in polys)


def test_pareto_front_basic():
    pts = [ParetoPoint("a", 1.0, 0.5), ParetoPoint("b", 2.0, 0.7), ParetoPoint("c", 2.0, 0.6),
           ParetoPoint("d", 3.0, 0.7), ParetoPoint("e", math.inf, 0.9), ParetoPoint("f", 1.0, 0.5)]
    assert [p.label for p in pareto_front(pts)] == ["a", "f", "b"]


points_st = st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=25)


@given(points_st, st.randoms())
def test_pareto_front_properties(raw, rnd):
    pts = [ParetoPoint(str(i), float(e), g / 6) for i, (e, g) in enumerate(raw)]
    front = pareto_front(pts)
    labels = {p.label for p in front}
    for p in front:
        assert not any(q.dominates(p) for q in pts)
    for p in pts:
        if p.label not in labels:
            assert any(q.dominates(p) for q in front)
    shuffled = pts[:]
    rnd.shuffle(shuffled)
    assert labels == {p.label for p in pareto_front(shuffled)}


def test_float_and_exact_spaces_agree():
    hists = [VoteHistogram((6, 2, 1), 1), VoteHistogram((4, 4, 1), 1), VoteHistogram((9, 0, 0), 1)]
    polys = enumerate_polys(2, 3)
    fast = evaluate_space(hists, polys, offset=None, queries=2, mode="canonical")
    slow = evaluate_space(hists, polys, offset=None, queries=2, mode="canonical", exact=True)
    for a, b in zip(fast.rows, slow.rows):
        assert a.label == b.label
        assert a.gta == pytest.approx(b.gta, abs=1e-13)
        assert a.epsilon == pytest.approx(b.epsilon, rel=1e-9)
        assert a.fail == pytest.approx(b.fail, abs=1e-13)
    assert [r.label for r in fast.front] == [r.label for r in slow.front]


def test_space_report_contents():
    hists = [VoteHistogram((7, 2, 1), 1), VoteHistogram((5, 4, 1), 1)]
    rep = evaluate_space(hists, enumerate_polys(2, 2), queries=100)
    assert [poly_key(r.poly) for r in rep.rows] == sorted(poly_key(r.poly) for r in rep.rows)
    assert rep.exact_argmax.gta == pytest.approx(float(sum(gta(h, None) for h in hists) / 2))
    assert rep.exact_argmax.epsilon == math.inf     # second sample is not dominant
    assert all(r.depth is not None and r.ct_ct_mults > 0 for r in rep.rows)
    x = next(r for r in rep.rows if str(r.poly) == "X")
    assert x.gta == pytest.approx((0.7 * 8 / 13 + 0.2 * 3 / 13 + 0.1 * 2 / 13
                                   + 0.5 * 6 / 13 + 0.4 * 5 / 13 + 0.1 * 2 / 13) / 2)


def test_offset_zero_marks_infinite_points():
    rep = evaluate_space([VoteHistogram((3, 1), 0)], enumerate_polys(1, 2), offset=0, queries=1,
                         mode="canonical", exact=True)
    assert not rep.front and len(rep.excluded_infinite) == 2


def test_evaluate_space_validation():
    with pytest.raises(ValidationError):
        evaluate_space([], enumerate_polys(1, 1))
    with pytest.raises(ValidationError):
        evaluate_space([VoteHistogram((1, 1))], [])
    with pytest.raises(ValidationError):
        evaluate_space([VoteHistogram((1, 1))], [parse_poly("X")], queries=5, mode="canonical")
