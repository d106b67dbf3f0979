"""Enumeration of polynomial parameterizations and privacy/utility fronts."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np

from .circuit import DEFAULT_SLOTS, CapacityError, circuit_cost
from .core import PolyParam, ValidationError, VoteHistogram, VoteMatrix, format_poly, histogram_from_votes
from .distribution import exact_argmax_accuracy, gta, output_distribution
from .privacy import DEFAULT_DELTA, DEFAULT_ORDERS, account, exact_argmax_privacy

DEFAULT_SUMS = (6, 12, 17, 32)
DEFAULT_MAX_DEGREE = 4
DEFAULT_QUERIES = 100


def enumerate_polys(max_degree: int, max_coeff_sum: int, require_a1: bool = False) -> list[PolyParam]:
    """Every polynomial with degree <= ``max_degree`` and coefficient sum
    <= ``max_coeff_sum``; with ``require_a1`` only those with ``a_1 = 1``."""
    if max_degree < 1 or max_coeff_sum < 1:
        raise ValueError("max_degree and max_coeff_sum must be >= 1")

    def rec(degree: int, budget: int) -> Iterator[tuple[int, ...]]:
        if degree == 0:
            yield ()
            return
        for a in range(budget + 1):
            for rest in rec(degree - 1, budget - a):
                yield rest + (a,)

    out = []
    for coeffs in rec(max_degree, max_coeff_sum):
        if not any(coeffs) or (require_a1 and coeffs[0] != 1):
            continue
        out.append(PolyParam({p + 1: a for p, a in enumerate(coeffs)}))
    return out


def poly_key(poly: PolyParam) -> tuple:
    return (poly.degree, tuple(poly.coeff(p) for p in range(poly.degree, 0, -1)))


# ---------------------------------------------------------------------------
# Pareto front
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParetoPoint:
    label: str
    epsilon: float
    gta: float

    def dominates(self, other: ParetoPoint) -> bool:
        return (self.epsilon <= other.epsilon and self.gta >= other.gta
                and (self.epsilon < other.epsilon or self.gta > other.gta))


def pareto_front(points: Sequence) -> list:
    """Non-dominated points under (minimise ``epsilon``, maximise ``gta``).

    Points with infinite epsilon are left out.  The result is ordered by
    epsilon; exact ties are all kept.
    """
    finite = [p for p in points if math.isfinite(p.epsilon)]
    order = sorted(range(len(finite)), key=lambda i: (finite[i].epsilon, -finite[i].gta, i))
    front = []
    best_prev = -math.inf  # best gta among strictly smaller epsilon
    j = 0
    while j < len(order):
        eps = finite[order[j]].epsilon
        group = []
        while j < len(order) and finite[order[j]].epsilon == eps:
            group.append(finite[order[j]])
            j += 1
        top = group[0].gta
        if top > best_prev:
            front.extend(p for p in group if p.gta == top)
            best_prev = top
    return front


# ---------------------------------------------------------------------------
# Batched float evaluation over many polynomials
# ---------------------------------------------------------------------------

def _coeff_matrix(polys: Sequence[PolyParam], degree: int) -> np.ndarray:
    return np.array([[p.coeff(d) for d in range(1, degree + 1)] for p in polys], dtype=float)


def batch_distributions(freqs: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Outcome distributions for every polynomial and frequency row.

    ``freqs``: ``(M, K)``; ``coeffs``: ``(P, D)`` with ``coeffs[:, p-1] = a_p``.
    Returns ``(P, M, K + 1)``, the last column being the failure mass.  The
    ``a_p`` identical rounds of a degree are folded with a geometric sum.
    """
    n_poly, degree = coeffs.shape
    probs = np.zeros((n_poly,) + freqs.shape)
    fail = np.ones((n_poly, freqs.shape[0]))
    for p in range(1, degree + 1):
        a = coeffs[:, p - 1][:, None]                      # (P, 1)
        hits = freqs ** p                                  # (M, K)
        s = hits.sum(axis=1)[None, :]                      # success mass of one round
        # a degree-1 round never fails: its miss mass is exactly zero
        miss = np.zeros_like(s) if p == 1 else np.clip(1.0 - s, 0.0, 1.0)
        stay = miss ** a                                   # (P, M), 0**0 == 1
        with np.errstate(invalid="ignore", divide="ignore"):
            geo = np.where(s > 0, (1.0 - stay) / s, a)
        probs = hits[None, :, :] * geo[:, :, None] + stay[:, :, None] * probs
        fail = stay * fail
    return np.concatenate([probs, fail[:, :, None]], axis=2)


def _batch_alphas(dists: np.ndarray, orders: np.ndarray, symmetric: bool) -> np.ndarray:
    """Max over neighbours (rows 1..) of the log-MGF against row 0: ``(P, L)``."""
    base = dists[:, :1, :]
    others = dists[:, 1:, :]
    pairs = [(base, others)]
    if symmetric:
        pairs.append((others, base))
    best = np.full((dists.shape[0], len(orders)), -np.inf)
    for p, q in pairs:
        p, q = np.broadcast_arrays(p, q)
        pos = p > 0
        infinite = np.any(pos & (q <= 0), axis=2)                   # (P, M')
        with np.errstate(divide="ignore"):
            logp = np.where(pos, np.log(np.where(pos, p, 1.0)), -np.inf)
            logr = np.where(pos & (q > 0), logp - np.log(np.where(q > 0, q, 1.0)), 0.0)
        expo = logp[..., None] + logr[..., None] * orders          # (P, M', K+1, L)
        top = expo.max(axis=2, keepdims=True)
        vals = np.log(np.exp(expo - top).sum(axis=2)) + top[:, :, 0, :]
        vals = np.where(infinite[..., None], np.inf, vals)
        best = np.maximum(best, vals.max(axis=1))
    return best


def _eps_from_alphas(alphas: np.ndarray, orders: np.ndarray, delta: float) -> np.ndarray:
    """Tail-bound inversion along the last axis."""
    with np.errstate(invalid="ignore"):
        return np.min((alphas - math.log(delta)) / orders, axis=-1)


# ---------------------------------------------------------------------------
# Space evaluation
# ---------------------------------------------------------------------------

@dataclass
class SpaceRow:
    poly: PolyParam | None
    gta: float
    exact_argmax_accuracy: float
    fail: float
    epsilon: float
    epsilon_canonical: float | None
    epsilon_mean_alpha: float | None
    depth: int | None
    ct_ct_mults: int | None
    rotations: int | None

    @property
    def label(self) -> str:
        return "exact argmax" if self.poly is None else format_poly(self.poly)

    def point(self) -> ParetoPoint:
        return ParetoPoint(self.label, self.epsilon, self.gta)


@dataclass
class SpaceReport:
    rows: list[SpaceRow]
    exact_argmax: SpaceRow
    mode: str
    delta: float
    queries: int
    front: list[SpaceRow] = field(default_factory=list)
    excluded_infinite: list[SpaceRow] = field(default_factory=list)


def _histograms(source: VoteMatrix | Sequence[VoteHistogram], offset: int | None) -> list[VoteHistogram]:
    if isinstance(source, VoteMatrix):
        return [histogram_from_votes(source, i, 1 if offset is None else offset)
                for i in range(source.num_samples)]
    hists = list(source)
    if offset is not None:
        hists = [h.with_offset(offset) for h in hists]
    return hists


def evaluate_space(source: VoteMatrix | Sequence[VoteHistogram], polys: Iterable[PolyParam],
                   offset: int | None = 1, delta: float = DEFAULT_DELTA,
                   queries: int = DEFAULT_QUERIES, mode: str = "compat",
                   orders: Sequence[int] = DEFAULT_ORDERS, exact: bool = False,
                   num_slots: int = DEFAULT_SLOTS, pack_rounds: bool = True,
                   chunk: int = 128) -> SpaceReport:
    """GTA, epsilon and circuit cost for every polynomial, plus the front.

    ``mode`` picks the epsilon used for the front: ``compat`` (mean
    per-sample single-query epsilon times ``queries``), or ``canonical`` /
    ``symmetric`` (moments of the first ``queries`` samples composed).
    ``exact=True`` runs the rational pipeline; the default float64 path is
    meant for large sweeps.
    """
    hists = _histograms(source, offset)
    if not hists:
        raise ValidationError("no samples")
    k = hists[0].num_classes
    n_real = hists[0].n_real
    if any(h.num_classes != k for h in hists):
        raise ValidationError("samples disagree on the number of classes")
    polys = sorted(set(polys), key=poly_key)
    if not polys:
        raise ValidationError("empty polynomial space")
    n = len(hists)
    if mode != "compat" and queries > n:
        raise ValidationError(f"{queries} queries requested but only {n} samples given")
    orders_arr = np.asarray(orders, dtype=float)

    def cost(poly):
        try:
            c = circuit_cost(poly, n_real, k, n, hists[0].offset, num_slots, pack_rounds)
            return c.depth, c.ct_ct_mults, c.rotations
        except CapacityError:
            return None, None, None

    rows: list[SpaceRow] = []
    if exact:
        for poly in polys:
            rows.append(_exact_row(hists, poly, delta, queries, mode, orders, cost(poly)))
    else:
        rows = _float_rows(hists, polys, delta, queries, mode, orders_arr, chunk, cost)

    argmax_row = _argmax_row(hists)
    report = SpaceReport(rows, argmax_row, mode, delta, queries)
    front = pareto_front([r.point() for r in rows])
    labels = {p.label for p in front}
    report.front = sorted((r for r in rows if r.label in labels),
                          key=lambda r: (r.epsilon, -r.gta, poly_key(r.poly)))
    report.excluded_infinite = [r for r in rows if not math.isfinite(r.epsilon)]
    return report


def _argmax_row(hists) -> SpaceRow:
    """Deterministic argmax: free when every sample is highly dominant,
    unbounded otherwise."""
    n = len(hists)
    g = float(sum((gta(h, None) for h in hists), Fraction(0)) / n)
    eps = max(exact_argmax_privacy(h).epsilon for h in hists)
    return SpaceRow(None, g, 1.0, 0.0, eps, eps, eps, None, None, None)


def _exact_row(hists, poly, delta, queries, mode, orders, cost_triple) -> SpaceRow:
    n = len(hists)
    g = float(sum((gta(h, poly) for h in hists), Fraction(0)) / n)
    acc = float(sum((exact_argmax_accuracy(h, poly) for h in hists), Fraction(0)) / n)
    fail = 0.0 if poly is None else float(
        sum((output_distribution(h, poly).fail for h in hists), Fraction(0)) / n)
    acct = account(hists, poly, delta, queries, mode, orders)
    canonical = acct.epsilon if mode != "compat" else None
    if mode == "compat" and queries <= n:
        canonical = account(hists, poly, delta, queries, "canonical", orders).epsilon
    return SpaceRow(poly, g, acc, fail, acct.headline_epsilon, canonical,
                    acct.compat_mean_alpha, *cost_triple)


def _float_rows(hists, polys, delta, queries, mode, orders, chunk, cost) -> list[SpaceRow]:
    from .privacy import AdjacencySet

    n = len(hists)
    degree = max(p.degree for p in polys)
    coeffs_all = _coeff_matrix(polys, degree)
    uniq = Counter((h.counts, h.offset) for h in hists)
    first_q = Counter((h.counts, h.offset) for h in hists[:min(queries, n)])
    symmetric = mode == "symmetric"

    n_poly, n_ord = len(polys), len(orders)
    gta_sum = np.zeros(n_poly)
    acc_sum = np.zeros(n_poly)
    fail_sum = np.zeros(n_poly)
    eps_sum = np.zeros(n_poly)
    alpha_sum = np.zeros((n_poly, n_ord))
    alpha_first = np.zeros((n_poly, n_ord))

    for (counts, off), weight in sorted(uniq.items()):
        h = VoteHistogram(counts, off)
        adj = AdjacencySet.of(h)
        freqs = np.array([h.augmented] + [nb.augmented for nb in adj.neighbors], float) / h.n_total
        real_w = np.asarray(counts, float) / h.n_real
        top = np.asarray(counts) == max(counts)
        for start in range(0, n_poly, chunk):
            sl = slice(start, start + chunk)
            dists = batch_distributions(freqs, coeffs_all[sl])
            base = dists[:, 0, :]
            alphas = _batch_alphas(dists, orders, symmetric)
            gta_sum[sl] += weight * (base[:, :-1] @ real_w)
            acc_sum[sl] += weight * base[:, :-1][:, top].sum(axis=1)
            fail_sum[sl] += weight * base[:, -1]
            eps_sum[sl] += weight * _eps_from_alphas(alphas, orders, delta)
            alpha_sum[sl] += weight * alphas
            alpha_first[sl] += first_q.get((counts, off), 0) * alphas

    eps_canonical = _eps_from_alphas(alpha_first, orders, delta) if queries <= n else None
    eps_mean_alpha = _eps_from_alphas(alpha_sum / n * queries, orders, delta)
    eps_compat = eps_sum / n * queries
    rows = []
    for j, poly in enumerate(polys):
        canonical = None if eps_canonical is None else float(eps_canonical[j])
        if mode == "compat":
            headline, mean_alpha = float(eps_compat[j]), float(eps_mean_alpha[j])
        else:
            headline, mean_alpha = canonical, None
        rows.append(SpaceRow(poly, float(gta_sum[j] / n), float(acc_sum[j] / n),
                             0.0 if poly.never_fails else float(fail_sum[j] / n),
                             headline, canonical, mean_alpha, *cost(poly)))
    return rows
