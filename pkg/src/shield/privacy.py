"""Data-dependent differential-privacy accounting.

Per-query moments are maximised over the databases adjacent to the observed
vote histogram, summed over queries and turned into ``(epsilon, delta)``
with the moments-accountant tail bound.  Moment generating functions are
evaluated in exact rationals; only their logarithm is a float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .core import (OutcomeDistribution, PolyParam, ShieldError, ValidationError,
                   VoteHistogram)
from .distribution import exact_argmax_distribution, output_distribution

DEFAULT_ORDERS = tuple(range(1, 33))
DEFAULT_DELTA = 1e-5
MODES = ("canonical", "symmetric", "compat")

_LN2 = math.log(2.0)


def log_fraction(q: Fraction) -> float:
    """Natural log of a positive rational without overflow or cancellation."""
    if q <= 0:
        raise ValueError("log of a nonpositive number")
    if abs(q - 1) < Fraction(1, 2):
        return math.log1p(float(q - 1))
    shift = q.numerator.bit_length() - q.denominator.bit_length()
    scaled = q / (Fraction(2) ** shift) if shift >= 0 else q * (Fraction(2) ** -shift)
    return math.log(float(scaled)) + shift * _LN2


def privacy_loss(d: OutcomeDistribution, d2: OutcomeDistribution, outcome: int | None) -> float:
    """``log(P_d[o] / P_d2[o])``, with the infinite cases spelled out."""
    if d.num_classes != d2.num_classes:
        raise ValidationError("distributions have different outcome sets")
    p, q = d.prob(outcome), d2.prob(outcome)
    if p == 0 and q == 0:
        raise ValueError(f"outcome {outcome} has zero probability under both databases")
    if q == 0:
        return math.inf
    if p == 0:
        return -math.inf
    return log_fraction(p / q)


def moment_mgf(d: OutcomeDistribution, d2: OutcomeDistribution, l: int) -> Fraction | None:
    """``E_{o~d}[(P_d[o]/P_d2[o])^l]`` exactly; ``None`` when infinite."""
    if l <= 0:
        raise ValueError("moment order must be a positive integer")
    total = Fraction(0)
    for o in d.outcomes():
        p, q = d.prob(o), d2.prob(o)
        if p == 0:
            continue
        if q == 0:
            return None
        total += p * (p / q) ** l
    return total


def moment(d: OutcomeDistribution, d2: OutcomeDistribution, l: int) -> float:
    """Log moment generating function of the privacy loss at order ``l``."""
    mgf = moment_mgf(d, d2, l)
    return math.inf if mgf is None else log_fraction(mgf)


def _moments_exact(d: OutcomeDistribution, d2: OutcomeDistribution,
                   orders: Sequence[int]) -> list[float]:
    pairs = []
    for o in d.outcomes():
        p, q = d.prob(o), d2.prob(o)
        if p == 0:
            continue
        if q == 0:
            return [math.inf] * len(orders)
        pairs.append((p, p / q))
    return [log_fraction(sum((p * r ** l for p, r in pairs), Fraction(0))) for l in orders]


# ---------------------------------------------------------------------------
# Adjacency
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdjacencySet:
    """Histograms obtained by moving one real vote between two classes.

    ``moves[i] = (k1, k2)`` (1-based) produced ``neighbors[i]``.
    """

    base: VoteHistogram
    neighbors: tuple[VoteHistogram, ...]
    moves: tuple[tuple[int, int], ...]

    @classmethod
    def of(cls, h: VoteHistogram) -> AdjacencySet:
        nbrs, moves = [], []
        for k1, c1 in enumerate(h.counts):
            if c1 < 1:
                continue
            for k2 in range(h.num_classes):
                if k2 == k1:
                    continue
                counts = list(h.counts)
                counts[k1] -= 1
                counts[k2] += 1
                nbrs.append(VoteHistogram(tuple(counts), h.offset))
                moves.append((k1 + 1, k2 + 1))
        return cls(h, tuple(nbrs), tuple(moves))


def _dist(h: VoteHistogram, poly: PolyParam | None) -> OutcomeDistribution:
    return exact_argmax_distribution(h) if poly is None else output_distribution(h, poly)


def query_alphas(h: VoteHistogram, poly: PolyParam | None,
                 orders: Sequence[int] = DEFAULT_ORDERS, symmetric: bool = False,
                 exact: bool = True) -> tuple[float, ...]:
    """Per-query moments ``alpha(l)`` for every ``l`` in ``orders``.

    Canonical mode fixes the observed histogram as the first database and
    maximises over its neighbours; ``symmetric`` also tries every pair with
    roles swapped.  ``poly=None`` accounts for the deterministic argmax.
    ``exact=False`` switches to a float64 evaluation for bulk sweeps.
    """
    orders = tuple(orders)
    if not orders or min(orders) < 1:
        raise ValueError("orders must be positive integers")
    if not exact and poly is not None:
        return tuple(_query_alphas_float(h, poly, orders, symmetric))
    adj = AdjacencySet.of(h)
    base = _dist(h, poly)
    best = [0.0] * len(orders) if not adj.neighbors else [-math.inf] * len(orders)
    for nb in adj.neighbors:
        other = _dist(nb, poly)
        cands = [_moments_exact(base, other, orders)]
        if symmetric:
            cands.append(_moments_exact(other, base, orders))
        for vals in cands:
            best = [max(b, v) for b, v in zip(best, vals)]
    return tuple(best)


def query_alpha(h: VoteHistogram, poly: PolyParam | None, l: int,
                symmetric: bool = False) -> float:
    return query_alphas(h, poly, (l,), symmetric)[0]


def _float_distributions(freqs: np.ndarray, rounds: Sequence[int]) -> np.ndarray:
    """Rows of ``[p_1..p_K, fail]`` for each row of frequencies."""
    probs = np.zeros_like(freqs)
    fail = np.ones(freqs.shape[0])
    for p in reversed(rounds):
        hits = freqs ** p
        miss = 1.0 - hits.sum(axis=1)
        probs = hits + miss[:, None] * probs
        fail = miss * fail
    return np.concatenate([probs, fail[:, None]], axis=1)


def _query_alphas_float(h: VoteHistogram, poly: PolyParam, orders: Sequence[int],
                        symmetric: bool) -> list[float]:
    adj = AdjacencySet.of(h)
    rows = np.array([h.augmented] + [nb.augmented for nb in adj.neighbors], dtype=float)
    dists = _float_distributions(rows / h.n_total, poly.rounds)
    # the support test needs exact zeros: rounding can leave a tiny failure mass
    if poly.never_fails:
        dists[:, -1] = 0.0
    np.clip(dists, 0.0, None, out=dists)
    base, others = dists[0], dists[1:]
    lo = np.asarray(orders, dtype=float)
    pairs = [(base, o) for o in others]
    if symmetric:
        pairs += [(o, base) for o in others]
    best = np.zeros(len(orders)) if not pairs else np.full(len(orders), -np.inf)
    for p, q in pairs:
        keep = p > 0
        if np.any(q[keep] == 0):
            return [math.inf] * len(orders)
        logr = np.log(p[keep]) - np.log(q[keep])
        logp = np.log(p[keep])
        # log sum_o p_o r_o^l via log-sum-exp
        expo = logp[None, :] + lo[:, None] * logr[None, :]
        top = expo.max(axis=1)
        vals = top + np.log(np.exp(expo - top[:, None]).sum(axis=1))
        best = np.maximum(best, vals)
    return best.tolist()


# ---------------------------------------------------------------------------
# Composition and tail bound
# ---------------------------------------------------------------------------

@dataclass
class MomentsLedger:
    """Per-query moment vectors over a fixed grid of orders."""

    orders: tuple[int, ...] = DEFAULT_ORDERS
    entries: list[tuple[tuple[float, ...], int]] = field(default_factory=list)

    def add(self, alphas: Sequence[float], count: int = 1) -> None:
        alphas = tuple(float(a) for a in alphas)
        if len(alphas) != len(self.orders):
            raise ValidationError("moment vector does not match the order grid")
        if count < 1:
            raise ValidationError("query count must be >= 1")
        if any(a < 0 for a in alphas):
            raise AssertionError(f"negative moment {min(alphas)}: not a valid privacy loss MGF")
        self.entries.append((alphas, int(count)))

    @property
    def num_queries(self) -> int:
        return sum(c for _, c in self.entries)

    def composed(self) -> tuple[float, ...]:
        if not self.entries:
            raise ShieldError("empty moments ledger")
        out = []
        for j in range(len(self.orders)):
            terms = [c * a[j] for a, c in self.entries]
            out.append(math.inf if math.inf in terms else math.fsum(terms))
        return tuple(out)

    def delta(self, epsilon: float) -> float:
        return delta_for_epsilon(self, epsilon)

    def epsilon(self, delta: float) -> float:
        return solve_epsilon(self, delta)[0]


def delta_for_epsilon(ledger: MomentsLedger, epsilon: float) -> float:
    """``min_l exp(alpha(l) - l * epsilon)`` over the ledger's orders."""
    best = math.inf
    for l, a in zip(ledger.orders, ledger.composed()):
        if a == math.inf:
            continue
        x = a - l * epsilon
        best = min(best, math.exp(x) if x < 700 else math.inf)
    return best


def solve_epsilon(ledger: MomentsLedger, delta: float) -> tuple[float, int | None]:
    """Smallest epsilon whose tail bound reaches ``delta``, and the order
    attaining it.

    ``delta(eps) <= target`` holds iff some order has
    ``eps >= (alpha(l) - log target) / l``, so the inverse is the minimum of
    those thresholds; it is exact on the order grid.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    log_delta = math.log(delta)
    best, arg = math.inf, None
    for l, a in zip(ledger.orders, ledger.composed()):
        if a == math.inf:
            continue
        eps = (a - log_delta) / l
        if eps < best:
            best, arg = eps, l
    return best, arg


# ---------------------------------------------------------------------------
# Exact argmax
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExactArgmaxPrivacy:
    epsilon: float
    highly_dominant: bool
    margin: int
    tie: bool


def exact_argmax_privacy(h: VoteHistogram) -> ExactArgmaxPrivacy:
    """Data-dependent cost of the deterministic argmax over real votes.

    With a lead of two or more votes no adjacent database changes the winner,
    so the release costs nothing; otherwise some neighbour flips it and the
    cost is unbounded.
    """
    top, second = sorted(h.counts, reverse=True)[:2]
    margin = top - second
    dominant = margin >= 2
    return ExactArgmaxPrivacy(0.0 if dominant else math.inf, dominant, margin, margin == 0)


# ---------------------------------------------------------------------------
# Multi-query accounting
# ---------------------------------------------------------------------------

@dataclass
class Accounting:
    mode: str
    delta: float
    orders: tuple[int, ...]
    queries: int
    per_query: list[tuple[float, ...]]
    composed: tuple[float, ...]
    epsilon: float
    best_order: int | None
    compat_mean_epsilon: float | None = None
    compat_mean_alpha: float | None = None

    @property
    def headline_epsilon(self) -> float:
        return self.compat_mean_epsilon if self.mode == "compat" else self.epsilon


def single_query_epsilon(alphas: Sequence[float], delta: float,
                         orders: Sequence[int] = DEFAULT_ORDERS) -> float:
    ledger = MomentsLedger(tuple(orders))
    ledger.add(alphas)
    return ledger.epsilon(delta)


def account(hists: Sequence[VoteHistogram], poly: PolyParam | None,
            delta: float = DEFAULT_DELTA, queries: int | None = None,
            mode: str = "canonical", orders: Iterable[int] = DEFAULT_ORDERS,
            exact: bool = True) -> Accounting:
    """Compose per-query moments over a batch of samples.

    ``canonical`` and ``symmetric`` treat the first ``queries`` samples (all
    by default) as the released queries and sum their moments.  ``compat``
    also computes the averaged-and-rescaled figures: the mean per-sample
    single-query epsilon times ``queries``, and the epsilon of ``queries``
    copies of the mean moment vector.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if not hists:
        raise ValidationError("no samples to account for")
    orders = tuple(orders)
    n = len(hists)
    if queries is None:
        queries = n
    if queries < 1:
        raise ValidationError("queries must be >= 1")
    if mode != "compat" and queries > n:
        raise ValidationError(f"{queries} queries requested but only {n} samples given")
    symmetric = mode == "symmetric"

    cache: dict[tuple, tuple[float, ...]] = {}

    def alphas_of(h: VoteHistogram) -> tuple[float, ...]:
        key = (h.counts, h.offset)
        if key not in cache:
            cache[key] = query_alphas(h, poly, orders, symmetric, exact)
        return cache[key]

    chosen = hists[:min(queries, n)]
    per_query = [alphas_of(h) for h in chosen]
    ledger = MomentsLedger(orders)
    for a in per_query:
        ledger.add(a)
    eps, arg = solve_epsilon(ledger, delta)
    result = Accounting(mode, delta, orders, len(chosen), per_query, ledger.composed(), eps, arg)

    if mode == "compat":
        all_alphas = [alphas_of(h) for h in hists]
        single = [single_query_epsilon(a, delta, orders) for a in all_alphas]
        result.compat_mean_epsilon = (math.inf if math.inf in single
                                      else math.fsum(single) / n * queries)
        mean_alpha = [math.inf if any(a[j] == math.inf for a in all_alphas)
                      else math.fsum(a[j] for a in all_alphas) / n for j in range(len(orders))]
        avg = MomentsLedger(orders)
        avg.add(mean_alpha, count=queries)
        result.compat_mean_alpha = avg.epsilon(delta)
        result.queries = queries
    return result

