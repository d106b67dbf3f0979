from shield.core import VoteHistogram
from shield.explorer import enumerate_polys, evaluate_space
from shield.plotting import fronts_figure, pareto_figure


def _report(bound):
    hists = [VoteHistogram((7, 2, 1), 1), VoteHistogram((6, 3, 1), 1)]
    return evaluate_space(hists, enumerate_polys(3, bound), queries=100)


def test_pareto_figure_is_deterministic_png():
    rep = _report(3)
    a = pareto_figure(rep, "title")
    assert a.startswith(b"\x89PNG") and len(a) > 2000
    assert a == pareto_figure(rep, "title")


def test_fronts_figure():
    png = fronts_figure({3: _report(3), 5: _report(5)})
    assert png.startswith(b"\x89PNG")
