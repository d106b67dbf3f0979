"""Plaintext execution of multi-degree SHIELD with offset.

Every run follows the bit-level state updates of the algorithm exactly
(``res``, ``found_not_null`` and the XOR null test), without early exit, so
the circuit model can be checked against it draw for draw.

Draw protocol shared with :mod:`shield.circuit`: for sample ``i`` under
seed ``s`` the generator is ``default_rng(SeedSequence([s, i]))`` and it
yields ``total_draws`` indices uniform over the augmented vote list (real
teachers in matrix order, then ``offset`` dummies per class), consumed
round by round in decreasing-degree order.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import (FAIL, OutcomeDistribution, PolyParam, ValidationError, VoteHistogram,
                   VoteMatrix, augmented_labels)

MC_CHUNK = 1 << 16


def sample_rng(seed: int, sample: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(sample)]))


def draw_rounds(seed: int, sample: int, poly: PolyParam, n_total: int) -> list[np.ndarray]:
    """Indices drawn for each round of ``poly`` on one sample."""
    flat = sample_rng(seed, sample).integers(0, n_total, size=poly.total_draws)
    return np.split(flat, np.cumsum(poly.rounds)[:-1])


def onehot_rows(labels: Sequence[int], num_classes: int) -> np.ndarray:
    rows = np.zeros((len(labels), num_classes), dtype=np.uint8)
    rows[np.arange(len(labels)), np.asarray(labels) - 1] = 1
    return rows


def shield_bits(votes: np.ndarray, draws: Sequence[Sequence[int]]) -> np.ndarray:
    """Run the algorithm on one-hot ``votes`` (rows over the augmented list)
    with explicit per-round draws; return the output bit vector."""
    k = votes.shape[1]
    res = np.zeros(k, dtype=np.uint8)
    found = 0
    for round_draws in draws:
        pi = np.ones(k, dtype=np.uint8)
        for idx in round_draws:
            pi &= votes[idx]
        res ^= (1 ^ found) & pi
        is_not_null = int(np.bitwise_xor.reduce(pi))
        found = found ^ is_not_null ^ (found & is_not_null)
    return res


def decode(bits: np.ndarray) -> int | None:
    ones = np.flatnonzero(bits)
    if ones.size == 0:
        return FAIL
    if ones.size > 1:
        raise AssertionError(f"output vector {bits.tolist()} is not one-hot")
    return int(ones[0]) + 1


def run_shield(m: VoteMatrix, sample: int, poly: PolyParam, offset: int = 1,
               seed: int = 0, draws: Sequence[Sequence[int]] | None = None) -> int | None:
    """Outcome class (1-based) of one run on ``sample``, or ``FAIL``."""
    labels = augmented_labels(m, sample, offset)
    if draws is None:
        draws = draw_rounds(seed, sample, poly, len(labels))
    elif [len(d) for d in draws] != list(poly.rounds):
        raise ValidationError("draws do not match the round structure of the polynomial")
    return decode(shield_bits(onehot_rows(labels, m.num_classes), draws))


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonteCarloResult:
    counts: tuple[int, ...]
    fail_count: int
    trials: int

    @property
    def probs(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.trials

    @property
    def fail(self) -> float:
        return self.fail_count / self.trials

    @property
    def sigma(self) -> np.ndarray:
        p = self.probs
        return np.sqrt(p * (1 - p) / self.trials)

    @property
    def fail_sigma(self) -> float:
        p = self.fail
        return float(np.sqrt(p * (1 - p) / self.trials))


def _mc_chunk(class_of: np.ndarray, rounds: Sequence[int], trials: int,
              rng: np.random.Generator) -> np.ndarray:
    """Vectorised runs in label space: ``res`` holds the output class (0 for
    the null vector), gated by the same ``found`` arithmetic as the bit
    version."""
    res = np.zeros(trials, dtype=np.int64)
    found = np.zeros(trials, dtype=np.uint8)
    n = len(class_of)
    for p in rounds:
        cls = class_of[rng.integers(0, n, size=(trials, p))]
        not_null = (cls == cls[:, :1]).all(axis=1).astype(np.uint8)
        take = ((1 ^ found) & not_null).astype(bool)
        res[take] = cls[take, 0]
        found = found ^ not_null ^ (found & not_null)
    return res


def monte_carlo(source: VoteHistogram | VoteMatrix, poly: PolyParam, offset: int | None = None,
                trials: int = 100_000, seed: int = 0, sample: int = 0) -> MonteCarloResult:
    """Empirical outcome frequencies over ``trials`` independent runs.

    A histogram carries its own offset unless ``offset`` is given.  Trials are
    split in fixed chunks with one labelled stream each, so the result only
    depends on ``(seed, trials)``.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    if isinstance(source, VoteMatrix):
        class_of = augmented_labels(source, sample, 1 if offset is None else offset)
        k = source.num_classes
    else:
        h = source if offset is None else source.with_offset(offset)
        class_of = h.class_of_index()
        k = h.num_classes
    totals = np.zeros(k + 1, dtype=np.int64)
    for chunk, start in enumerate(range(0, trials, MC_CHUNK)):
        size = min(MC_CHUNK, trials - start)
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x4D43, chunk]))
        out = _mc_chunk(class_of, poly.rounds, size, rng)
        totals += np.bincount(out, minlength=k + 1)
    return MonteCarloResult(tuple(int(c) for c in totals[1:]), int(totals[0]), trials)


# ---------------------------------------------------------------------------
# Exhaustive enumeration oracles
# ---------------------------------------------------------------------------

def _round_products(votes: np.ndarray, p: int) -> Counter:
    """Multiset of products over all ``n^p`` index tuples of one round."""
    out: Counter = Counter()
    for idx in itertools.product(range(votes.shape[0]), repeat=p):
        pi = np.bitwise_and.reduce(votes[list(idx)], axis=0)
        out[tuple(int(b) for b in pi)] += 1
    return out


def enumerate_distribution(class_of: Sequence[int], num_classes: int,
                           rounds: Sequence[int]) -> OutcomeDistribution:
    """Exact distribution by enumerating every draw sequence.

    Draw sequences are grouped by the product vector they give in each round
    (the state update only sees that product), then every combination of
    per-round products is pushed through the bit-level update.
    """
    votes = onehot_rows(class_of, num_classes)
    n = votes.shape[0]
    per_round = [sorted(_round_products(votes, p).items()) for p in rounds]
    probs = [0] * num_classes
    fail = 0
    for combo in itertools.product(*per_round):
        weight = 1
        res = np.zeros(num_classes, dtype=np.uint8)
        found = 0
        for pi, count in combo:
            weight *= count
            pi = np.array(pi, dtype=np.uint8)
            res ^= (1 ^ found) & pi
            is_not_null = int(np.bitwise_xor.reduce(pi))
            found = found ^ is_not_null ^ (found & is_not_null)
        out = decode(res)
        if out is FAIL:
            fail += weight
        else:
            probs[out - 1] += weight
    total = n ** sum(rounds)
    return OutcomeDistribution(tuple(Fraction(c, total) for c in probs), Fraction(fail, total))


def enumerate_distribution_naive(class_of: Sequence[int], num_classes: int,
                                 rounds: Sequence[int]) -> OutcomeDistribution:
    """Ungrouped enumeration; only for very small ``n ** total_draws``."""
    votes = onehot_rows(class_of, num_classes)
    n = votes.shape[0]
    total_draws = sum(rounds)
    cuts = np.cumsum(rounds)[:-1]
    tally: Counter = Counter()
    for seq in itertools.product(range(n), repeat=total_draws):
        tally[decode(shield_bits(votes, np.split(np.array(seq, dtype=np.int64), cuts)))] += 1
    total = n ** total_draws
    probs = tuple(Fraction(tally[k], total) for k in range(1, num_classes + 1))
    return OutcomeDistribution(probs, Fraction(tally[FAIL], total))
