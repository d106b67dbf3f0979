"""Exact output distribution of the probabilistic argmax and the a-priori
accuracy metrics built on it."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import (OutcomeDistribution, PolyParam, ValidationError, VoteHistogram,
                   VoteMatrix, histogram_from_votes)


def distribution_for_rounds(freqs: Sequence[Fraction], rounds: Sequence[int]) -> OutcomeDistribution:
    """Distribution when the rounds are executed in the given order.

    Evaluated back to front: a round of degree ``p`` succeeds on class ``k``
    with probability ``f_k^p``; otherwise control passes to the remaining
    rounds.
    """
    if not rounds:
        raise ValidationError("no rounds to execute")
    probs = [Fraction(0)] * len(freqs)
    fail = Fraction(1)
    for p in reversed(rounds):
        hits = [f ** p for f in freqs]
        miss = 1 - sum(hits)
        probs = [h + miss * q for h, q in zip(hits, probs)]
        fail = miss * fail
    return OutcomeDistribution(tuple(probs), fail)


@lru_cache(maxsize=65536)
def _cached(augmented: tuple[int, ...], poly: PolyParam) -> OutcomeDistribution:
    n = sum(augmented)
    return distribution_for_rounds([Fraction(c, n) for c in augmented], poly.rounds)


def output_distribution(h: VoteHistogram, poly: PolyParam) -> OutcomeDistribution:
    """Probability of every class and of failure for histogram ``h``.

    >>> output_distribution(VoteHistogram((3, 1), 0), PolyParam({2: 1, 1: 1})).probs
    (Fraction(27, 32), Fraction(5, 32))
    """
    return _cached(h.augmented, poly)


def exact_argmax_distribution(h: VoteHistogram) -> OutcomeDistribution:
    """Deterministic argmax over real votes; ties go to the lowest class."""
    top = int(np.argmax(h.counts))
    probs = [Fraction(0)] * h.num_classes
    probs[top] = Fraction(1)
    return OutcomeDistribution(tuple(probs))


def _distribution(h: VoteHistogram, poly: PolyParam | None) -> OutcomeDistribution:
    return exact_argmax_distribution(h) if poly is None else output_distribution(h, poly)


def gta(h: VoteHistogram, poly: PolyParam | None, include_dummies: bool = False) -> Fraction:
    """Ground-truth accuracy: ``sum_k w_k p_k``.

    ``w_k`` is the real-vote frequency ``n_k / n_real``; pass
    ``include_dummies=True`` to weight by the augmented frequencies instead.
    ``poly=None`` evaluates the deterministic exact argmax.
    """
    dist = _distribution(h, poly)
    if include_dummies:
        weights = h.frequencies
    else:
        weights = tuple(Fraction(c, h.n_real) for c in h.counts)
    return sum((w * p for w, p in zip(weights, dist.probs)), Fraction(0))


def exact_argmax_accuracy(h: VoteHistogram, poly: PolyParam | None) -> Fraction:
    """Probability of returning a real-vote argmax (tied classes all count)."""
    dist = _distribution(h, poly)
    top = max(h.counts)
    return sum((p for c, p in zip(h.counts, dist.probs) if c == top), Fraction(0))


@dataclass(frozen=True)
class MeanMetrics:
    gta: Fraction
    exact_argmax_accuracy: Fraction
    fail: Fraction
    expected_correct: Fraction | None
    num_samples: int


def mean_metrics(m: VoteMatrix, poly: PolyParam | None, offset: int = 1,
                 truth: Sequence[int] | None = None,
                 include_dummies: bool = False) -> MeanMetrics:
    """Average the per-sample metrics over every sample of ``m``.

    With ``truth`` (1-based labels aligned with samples) also returns the
    expected number of samples whose output equals the truth.
    """
    if truth is not None and len(truth) != m.num_samples:
        raise ValidationError(
            f"{len(truth)} ground-truth labels for {m.num_samples} samples")
    hists = [histogram_from_votes(m, i, offset) for i in range(m.num_samples)]
    return mean_metrics_from_histograms(hists, poly, truth, include_dummies)


def mean_metrics_from_histograms(hists: Sequence[VoteHistogram], poly: PolyParam | None,
                                 truth: Sequence[int] | None = None,
                                 include_dummies: bool = False) -> MeanMetrics:
    if not hists:
        raise ValidationError("no samples")
    if truth is not None and len(truth) != len(hists):
        raise ValidationError(f"{len(truth)} ground-truth labels for {len(hists)} samples")
    n = len(hists)
    g = sum((gta(h, poly, include_dummies) for h in hists), Fraction(0)) / n
    acc = sum((exact_argmax_accuracy(h, poly) for h in hists), Fraction(0)) / n
    fail = sum((_distribution(h, poly).fail for h in hists), Fraction(0)) / n
    correct = None
    if truth is not None:
        correct = sum((_distribution(h, poly).prob(int(t)) for h, t in zip(hists, truth)),
                      Fraction(0))
    return MeanMetrics(g, acc, fail, correct, n)
