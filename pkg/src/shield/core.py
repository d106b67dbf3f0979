"""Domain types: vote histograms, polynomial parameterizations, vote matrices
and outcome distributions, plus the polynomial text parser.

Classes are 1-based in every public signature (``1..K``).  The failure
outcome (all rounds produced the null vector) is represented by ``FAIL``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

FAIL = None
"""Outcome label of a failed run (null output vector)."""


class ShieldError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(ShieldError, ValueError):
    """Input data violates a type invariant."""


class ParseError(ShieldError, ValueError):
    """Malformed polynomial text; ``offset`` is the byte offset of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


# ---------------------------------------------------------------------------
# Polynomial parameterization
# ---------------------------------------------------------------------------

@dataclass(frozen=True, init=False)
class PolyParam:
    """A parameterization ``sum_p a_p X^p``: ``a_p`` rounds that each multiply
    ``p`` drawn votes, executed from the highest degree down."""

    coeffs: tuple[tuple[int, int], ...]

    def __init__(self, coeffs: Mapping[int, int] | Iterable[tuple[int, int]]):
        clean: dict[int, int] = {}
        for p, a in dict(coeffs).items():
            p, a = int(p), int(a)
            if p < 1:
                raise ValidationError(f"degree must be >= 1, got {p}")
            if a < 0:
                raise ValidationError(f"coefficient of X^{p} is negative")
            if a:
                clean[p] = clean.get(p, 0) + a
        if not clean:
            raise ValidationError("polynomial has no nonzero coefficient")
        object.__setattr__(self, "coeffs", tuple(sorted(clean.items(), reverse=True)))

    def coeff(self, p: int) -> int:
        return dict(self.coeffs).get(p, 0)

    @property
    def degree(self) -> int:
        return self.coeffs[0][0]

    @property
    def num_rounds(self) -> int:
        return sum(a for _, a in self.coeffs)

    @property
    def total_draws(self) -> int:
        return sum(p * a for p, a in self.coeffs)

    @property
    def rounds(self) -> tuple[int, ...]:
        """Round degrees in evaluation order (non-increasing)."""
        return tuple(p for p, a in self.coeffs for _ in range(a))

    @property
    def never_fails(self) -> bool:
        return self.coeff(1) >= 1

    def as_dict(self) -> dict[int, int]:
        return dict(self.coeffs)

    def __str__(self) -> str:
        return format_poly(self)


def format_poly(poly: PolyParam) -> str:
    """Canonical text form, highest degree first, e.g. ``2X^3+3X^2+X``."""
    terms = []
    for p, a in poly.coeffs:
        coef = "" if a == 1 else str(a)
        power = "" if p == 1 else f"^{p}"
        terms.append(f"{coef}X{power}")
    return "+".join(terms)


def parse_poly(text: str) -> PolyParam:
    """Parse ``term ('+' term)*`` where ``term = [coef] 'X' ['^' power]``.

    Whitespace is ignored and repeated degrees are summed.

    >>> parse_poly("2X^3 + 3X^2 + X").as_dict()
    {3: 2, 2: 3, 1: 1}
    """
    # byte offsets of every non-blank character in the original text
    chars: list[tuple[str, int]] = []
    pos = 0
    for ch in text:
        if not ch.isspace():
            chars.append((ch, pos))
        pos += len(ch.encode("utf-8"))
    end = pos
    if not chars:
        raise ParseError("empty polynomial", 0)

    i = 0

    def here() -> int:
        return chars[i][1] if i < len(chars) else end

    def read_int() -> tuple[int, int] | None:
        nonlocal i
        start = i
        while i < len(chars) and chars[i][0].isdigit() and chars[i][0].isascii():
            i += 1
        if i == start:
            return None
        return int("".join(c for c, _ in chars[start:i])), chars[start][1]

    coeffs: dict[int, int] = {}
    while True:
        if i < len(chars) and chars[i][0] == "-":
            raise ParseError("negative coefficient", here())
        num = read_int()
        coef = 1
        if num is not None:
            coef, at = num
            if coef == 0:
                raise ParseError("zero coefficient", at)
        if i >= len(chars) or chars[i][0] not in "Xx":
            raise ParseError("expected 'X'", here())
        i += 1
        power = 1
        if i < len(chars) and chars[i][0] == "^":
            i += 1
            num = read_int()
            if num is None:
                raise ParseError("expected exponent after '^'", here())
            power, at = num
            if power == 0:
                raise ParseError("exponent must be >= 1", at)
        coeffs[power] = coeffs.get(power, 0) + coef
        if i == len(chars):
            break
        if chars[i][0] != "+":
            raise ParseError(f"unexpected character {chars[i][0]!r}", here())
        i += 1
        if i == len(chars):
            raise ParseError("dangling '+'", end)
    return PolyParam(coeffs)


# ---------------------------------------------------------------------------
# Votes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VoteHistogram:
    """Per-class real vote counts plus ``offset`` dummy votes for every class."""

    counts: tuple[int, ...]
    offset: int = 1

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "offset", int(self.offset))
        if len(counts) < 2:
            raise ValidationError("need at least two classes")
        if any(c < 0 for c in counts):
            raise ValidationError("vote counts must be nonnegative")
        if sum(counts) < 1:
            raise ValidationError("histogram has no real vote")
        if self.offset < 0:
            raise ValidationError("offset must be nonnegative")

    @property
    def num_classes(self) -> int:
        return len(self.counts)

    @property
    def n_real(self) -> int:
        return sum(self.counts)

    @property
    def n_total(self) -> int:
        return self.n_real + self.offset * self.num_classes

    @property
    def augmented(self) -> tuple[int, ...]:
        return tuple(c + self.offset for c in self.counts)

    @property
    def frequencies(self) -> tuple[Fraction, ...]:
        n = self.n_total
        return tuple(Fraction(c, n) for c in self.augmented)

    def with_offset(self, offset: int) -> VoteHistogram:
        return VoteHistogram(self.counts, offset)

    def class_of_index(self) -> np.ndarray:
        """Class (1-based) of every entry of the augmented vote list: real
        votes grouped by class, then ``offset`` dummies per class."""
        real = np.repeat(np.arange(1, self.num_classes + 1), self.counts)
        dummies = np.repeat(np.arange(1, self.num_classes + 1), self.offset)
        return np.concatenate([real, dummies]).astype(np.int64)


@dataclass(frozen=True, eq=False)
class VoteMatrix:
    """One-hot votes, shape ``(samples, teachers, classes)``, read-only."""

    onehot: np.ndarray
    sample_ids: tuple[str, ...] = field(default=())
    teacher_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        arr = np.array(self.onehot, dtype=np.uint8)
        if arr.ndim != 3:
            raise ValidationError("vote matrix must have shape (samples, teachers, classes)")
        n_samples, n_teachers, k = arr.shape
        if n_samples < 1 or n_teachers < 1:
            raise ValidationError("vote matrix is empty")
        if k < 2:
            raise ValidationError("need at least two classes")
        if np.any(arr > 1):
            raise ValidationError("vote entries must be 0 or 1")
        rowsum = arr.sum(axis=2)
        bad = np.argwhere(rowsum != 1)
        if bad.size:
            s, t = bad[0]
            raise ValidationError(
                f"vote of teacher {t} on sample {s} is not one-hot ({rowsum[s, t]} ones)")
        arr.setflags(write=False)
        object.__setattr__(self, "onehot", arr)
        if not self.sample_ids:
            object.__setattr__(self, "sample_ids", tuple(str(i) for i in range(n_samples)))
        if not self.teacher_ids:
            object.__setattr__(self, "teacher_ids", tuple(str(t) for t in range(n_teachers)))
        if len(self.sample_ids) != n_samples or len(self.teacher_ids) != n_teachers:
            raise ValidationError("id lists do not match the vote matrix shape")

    @classmethod
    def from_labels(cls, labels: Sequence[Sequence[int]], num_classes: int, **ids) -> VoteMatrix:
        """Build from 1-based class labels, shape ``(samples, teachers)``."""
        lab = np.asarray(labels, dtype=np.int64)
        if lab.ndim != 2:
            raise ValidationError("labels must have shape (samples, teachers)")
        if lab.size and (lab.min() < 1 or lab.max() > num_classes):
            raise ValidationError(f"class labels must lie in 1..{num_classes}")
        onehot = np.zeros(lab.shape + (num_classes,), dtype=np.uint8)
        np.put_along_axis(onehot, (lab - 1)[..., None], 1, axis=2)
        return cls(onehot, **ids)

    @property
    def num_samples(self) -> int:
        return self.onehot.shape[0]

    @property
    def num_teachers(self) -> int:
        return self.onehot.shape[1]

    @property
    def num_classes(self) -> int:
        return self.onehot.shape[2]

    def labels(self) -> np.ndarray:
        """1-based class voted by each teacher, shape ``(samples, teachers)``."""
        return self.onehot.argmax(axis=2) + 1


def histogram_from_votes(m: VoteMatrix, sample: int, offset: int = 1) -> VoteHistogram:
    if not 0 <= sample < m.num_samples:
        raise IndexError(f"sample index {sample} out of range")
    counts = m.onehot[sample].sum(axis=0)
    return VoteHistogram(tuple(int(c) for c in counts), offset)


def augmented_labels(m: VoteMatrix, sample: int, offset: int) -> np.ndarray:
    """Classes of the augmented vote list of one sample: the real teachers in
    matrix order followed by ``offset`` dummies per class."""
    dummies = np.repeat(np.arange(1, m.num_classes + 1), offset)
    return np.concatenate([m.labels()[sample], dummies]).astype(np.int64)


# ---------------------------------------------------------------------------
# Outcome distribution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OutcomeDistribution:
    """Exact probability of each class (``probs[k-1]``) and of failure."""

    probs: tuple[Fraction, ...]
    fail: Fraction = Fraction(0)

    def __post_init__(self):
        probs = tuple(Fraction(p) for p in self.probs)
        fail = Fraction(self.fail)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "fail", fail)
        if any(p < 0 for p in probs) or fail < 0:
            raise ValidationError("negative probability")
        if sum(probs) + fail != 1:
            raise ValidationError("probabilities do not sum to one")

    @property
    def num_classes(self) -> int:
        return len(self.probs)

    def prob(self, outcome: int | None) -> Fraction:
        """Probability of class ``outcome`` (1-based) or of ``FAIL``."""
        if outcome is FAIL:
            return self.fail
        if not 1 <= outcome <= self.num_classes:
            raise ValueError(f"outcome {outcome} outside 1..{self.num_classes}")
        return self.probs[outcome - 1]

    def outcomes(self) -> list[int | None]:
        return list(range(1, self.num_classes + 1)) + [FAIL]

    def as_floats(self) -> tuple[list[float], float]:
        return [float(p) for p in self.probs], float(self.fail)
