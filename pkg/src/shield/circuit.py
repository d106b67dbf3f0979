"""Slot-level model of the batched (SIMD) evaluation.

Ciphertexts are modelled as bit vectors over ``num_slots`` slots with
arithmetic over Z_2: ``add`` is XOR, ``mul`` is AND.  Every operation is
counted and each state carries its multiplicative depth, so the model gives
both the decrypted outputs (checked against :mod:`shield.simulator`) and the
cost of the circuit.

Slot layout: ``R`` round segments of ``N`` sample blocks of ``K_pad`` slots,
``slot(r, i, k) = (r * N + i) * K_pad + k``.  Slots past the used region
hold zeros.

Dummy votes are public constants chosen by the evaluator, so all dummy
factors of a draw pass fold into one plaintext and cost a single
plaintext multiplication.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import FAIL, PolyParam, ShieldError, ValidationError, VoteMatrix, augmented_labels
from .simulator import draw_rounds

DEFAULT_SLOTS = 32768


class CapacityError(ShieldError):
    """The slot layout cannot hold the requested blocks."""


def next_pow2(x: int) -> int:
    return 1 << max(0, (int(x) - 1).bit_length())


def ceil_log2(x: int) -> int:
    return (int(x) - 1).bit_length() if x > 1 else 0


def capacity(num_slots: int, num_classes: int, rounds: int = 1) -> int:
    """Samples that fit in one ciphertext: ``floor(num_slots / (K_pad * R))``."""
    if rounds < 1:
        raise ValueError("at least one round segment is required")
    if num_classes < 1 or num_slots < 1:
        raise ValueError("num_slots and num_classes must be positive")
    return num_slots // (next_pow2(num_classes) * rounds)


@dataclass(frozen=True)
class Layout:
    num_slots: int
    num_samples: int
    num_classes: int
    rounds: int = 1

    def __post_init__(self):
        if self.rounds < 1 or self.num_samples < 1:
            raise ValueError("layout needs at least one sample and one round")
        if self.num_slots % self.k_pad:
            raise ValueError("num_slots must be a multiple of K_pad")
        if self.used > self.num_slots:
            raise CapacityError(
                f"{self.num_samples} samples x {self.rounds} rounds x {self.k_pad} slots "
                f"exceed {self.num_slots} slots")

    @property
    def k_pad(self) -> int:
        return next_pow2(self.num_classes)

    @property
    def segment(self) -> int:
        return self.num_samples * self.k_pad

    @property
    def used(self) -> int:
        return self.rounds * self.segment

    def blocks(self, bits: np.ndarray) -> np.ndarray:
        """View of the used slots as ``(rounds, samples, K_pad)``."""
        return bits[: self.used].reshape(self.rounds, self.num_samples, self.k_pad)

    def from_blocks(self, blocks: np.ndarray) -> np.ndarray:
        out = np.zeros(self.num_slots, dtype=np.uint8)
        out[: self.used] = np.asarray(blocks, dtype=np.uint8).reshape(-1)
        return out

    def segment_mask(self, segments: Sequence[bool]) -> np.ndarray:
        blocks = np.zeros((self.rounds, self.num_samples, self.k_pad), dtype=np.uint8)
        blocks[np.asarray(segments, dtype=bool)] = 1
        return self.from_blocks(blocks)

    def first_coordinate_mask(self) -> np.ndarray:
        mask = np.zeros(self.num_slots, dtype=np.uint8)
        mask[:: self.k_pad] = 1
        return mask


@dataclass
class OpCounts:
    ct_ct_mults: int = 0
    ct_pt_mults: int = 0
    additions: int = 0
    rotations: int = 0


@dataclass(frozen=True, eq=False)
class PackedState:
    """A ciphertext: slot bits, layout, depth and the pipeline's counters."""

    slots: np.ndarray
    layout: Layout
    counts: OpCounts
    depth: int = 0

    def _check(self, other: PackedState) -> None:
        if other.layout != self.layout or other.counts is not self.counts:
            raise ValueError("states belong to different pipelines or layouts")

    def _new(self, slots: np.ndarray, depth: int) -> PackedState:
        return PackedState(slots, self.layout, self.counts, depth)

    def mul(self, other: PackedState) -> PackedState:
        self._check(other)
        self.counts.ct_ct_mults += 1
        return self._new(self.slots & other.slots, 1 + max(self.depth, other.depth))

    def mul_plain(self, bits: np.ndarray) -> PackedState:
        self.counts.ct_pt_mults += 1
        return self._new(self.slots & bits, self.depth)

    def add(self, other: PackedState) -> PackedState:
        self._check(other)
        self.counts.additions += 1
        return self._new(self.slots ^ other.slots, max(self.depth, other.depth))

    def add_plain(self, bits: np.ndarray) -> PackedState:
        self.counts.additions += 1
        return self._new(self.slots ^ bits, self.depth)

    def rotate(self, steps: int) -> PackedState:
        """Cyclic left rotation: slot ``x`` receives slot ``x + steps``."""
        self.counts.rotations += 1
        return self._new(np.roll(self.slots, -steps), self.depth)

    def homomorphic_or(self, other: PackedState) -> PackedState:
        return self.add(other).add(self.mul(other))


def product_tree(states: Sequence[PackedState]) -> PackedState:
    """Balanced pairwise product: depth grows by ``ceil(log2(len(states)))``."""
    level = list(states)
    if not level:
        raise ValueError("product of an empty list of states")
    while len(level) > 1:
        nxt = [a.mul(b) for a, b in zip(level[::2], level[1::2])]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def slot_sum(state: PackedState, k_pad: int | None = None) -> PackedState:
    """Broadcast the Z_2 sum of every block to all its coordinates.

    ``log2(K_pad)`` rotate-and-add steps gather the sum in the first
    coordinate, a plaintext mask keeps only that coordinate, and the same
    number of reverse rotations refill the block.
    """
    layout = state.layout
    k_pad = layout.k_pad if k_pad is None else k_pad
    if k_pad < 1 or k_pad & (k_pad - 1):
        raise ValueError(f"K_pad={k_pad} is not a power of two")
    if k_pad != layout.k_pad:
        raise ValueError("K_pad does not match the state layout")
    ones = layout.blocks(state.slots).sum(axis=2)
    if np.any(ones > 1):
        raise AssertionError("block has more than one nonzero coordinate; Z_2 sum is a parity")
    s = state
    shift = k_pad // 2
    while shift >= 1:
        s = s.add(s.rotate(shift))
        shift //= 2
    s = s.mul_plain(layout.first_coordinate_mask())
    shift = 1
    while shift < k_pad:
        s = s.add(s.rotate(-shift))
        shift *= 2
    return s


# ---------------------------------------------------------------------------
# Teacher selection
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PackedVotes:
    """Masked teacher states ``z_t + m_t`` for one draw pass.

    ``states[t]`` is inert (all ones) on every block where teacher ``t`` was
    not drawn; ``dummy_factor`` is the plaintext product of the dummy votes.
    """

    states: list[PackedState]
    masks: list[np.ndarray]
    dummy_factor: np.ndarray | None


def encrypt_teacher_votes(labels: np.ndarray, layout: Layout, counts: OpCounts) -> list[PackedState]:
    """One ciphertext per real teacher holding its one-hot vote for every
    sample, replicated over the round segments.  ``labels`` has shape
    ``(samples, teachers)``, 1-based."""
    n_samples, n_teachers = labels.shape
    if n_samples != layout.num_samples:
        raise ValidationError("labels do not match the layout")
    onehot = np.zeros((n_teachers, n_samples, layout.k_pad), dtype=np.uint8)
    t_idx, s_idx = np.meshgrid(np.arange(n_teachers), np.arange(n_samples), indexing="ij")
    onehot[t_idx, s_idx, labels.T - 1] = 1
    out = []
    for t in range(n_teachers):
        blocks = np.broadcast_to(onehot[t], (layout.rounds,) + onehot[t].shape)
        out.append(PackedState(layout.from_blocks(blocks), layout, counts))
    return out


def pack_votes(encrypted: Sequence[PackedState], aug_labels: np.ndarray,
               selection: np.ndarray, layout: Layout) -> PackedVotes:
    """Apply one pass of teacher selection.

    ``selection[r, i]`` is the augmented index drawn for sample ``i`` in round
    segment ``r`` (``-1``: no draw in this pass).  Indices below
    ``len(encrypted)`` are real teachers, the rest are dummies whose classes
    come from ``aug_labels[i]``.
    """
    selection = np.asarray(selection)
    if selection.shape != (layout.rounds, layout.num_samples):
        raise CapacityError(f"selection of shape {selection.shape} does not fit {layout}")
    n_real = len(encrypted)
    states, masks = [], []
    for t, enc in enumerate(encrypted):
        chosen = np.repeat((selection == t)[..., None], layout.k_pad, axis=2)
        sel_bits = layout.from_blocks(chosen)
        mask = layout.from_blocks(~chosen)
        states.append(enc.mul_plain(sel_bits).add_plain(mask))
        masks.append(mask)

    dummy_factor = None
    if aug_labels.shape[1] > n_real:
        blocks = np.ones((layout.rounds, layout.num_samples, layout.k_pad), dtype=np.uint8)
        r_idx, i_idx = np.nonzero(selection >= n_real)
        cls = aug_labels[i_idx, selection[r_idx, i_idx]]
        blocks[r_idx, i_idx] = 0
        blocks[r_idx, i_idx, cls - 1] = 1
        dummy_factor = layout.from_blocks(blocks)
    return PackedVotes(states, masks, dummy_factor)


def _pass_product(encrypted: Sequence[PackedState], aug_labels: np.ndarray,
                  selection: np.ndarray, layout: Layout) -> PackedState:
    packed = pack_votes(encrypted, aug_labels, selection, layout)
    prod = product_tree(packed.states)
    if packed.dummy_factor is not None:
        prod = prod.mul_plain(packed.dummy_factor)
    return prod


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

@dataclass
class CostReport:
    depth: int = 0
    depth_selection: int = 0
    depth_round_product: int = 0
    depth_gating: int = 0
    ct_ct_mults: int = 0
    ct_pt_mults: int = 0
    additions: int = 0
    rotations: int = 0
    num_slots: int = DEFAULT_SLOTS
    k_pad: int = 0
    rounds_packed: int = 1
    samples: int = 0
    samples_per_ciphertext: int = 0
    batches: int = 0
    slot_utilization: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class CircuitResult:
    outcomes: list[int | None]
    cost: CostReport
    depths: dict = field(default_factory=dict)


def _decode_blocks(blocks: np.ndarray, num_classes: int) -> list[int | None]:
    out = []
    for block in blocks:
        ones = np.flatnonzero(block)
        if ones.size == 0:
            out.append(FAIL)
        elif ones.size == 1 and ones[0] < num_classes:
            out.append(int(ones[0]) + 1)
        else:
            raise AssertionError(f"decrypted block {block.tolist()} is not a class encoding")
    return out


def _prefix_or_packed(x: PackedState) -> PackedState:
    """Inclusive prefix OR across round segments (Hillis-Steele scan)."""
    layout = x.layout
    seg_ids = np.arange(layout.rounds)
    shift = 1
    while shift < layout.rounds:
        y = x.rotate(-shift * layout.segment).mul_plain(layout.segment_mask(seg_ids >= shift))
        x = x.homomorphic_or(y)
        shift *= 2
    return x


def _segment_sum(x: PackedState) -> PackedState:
    """Sum of all round segments, delivered in segment 0."""
    layout = x.layout
    windows = {1: x}
    w = 1
    while 2 * w <= layout.rounds:
        windows[2 * w] = windows[w].add(windows[w].rotate(w * layout.segment))
        w *= 2
    acc, offset = None, 0
    while w >= 1:
        if layout.rounds & w:
            part = windows[w] if offset == 0 else windows[w].rotate(offset * layout.segment)
            acc = part if acc is None else acc.add(part)
            offset += w
        w //= 2
    return acc


def _run_packed(labels: np.ndarray, aug: np.ndarray, draws, poly: PolyParam,
                num_slots: int, num_classes: int, counts: OpCounts):
    rounds = poly.rounds
    layout = Layout(num_slots, labels.shape[0], num_classes, len(rounds))
    encrypted = encrypt_teacher_votes(labels, layout, counts)
    passes = []
    for l in range(poly.degree):
        sel = np.full((layout.rounds, layout.num_samples), -1, dtype=np.int64)
        for r, p in enumerate(rounds):
            if l < p:
                sel[r] = [d[r][l] for d in draws]
        passes.append(_pass_product(encrypted, aug, sel, layout))
    d_sel = max(s.depth for s in passes)
    pi = product_tree(passes)
    d_pi = pi.depth
    not_null = slot_sum(pi)
    if layout.rounds > 1:
        found = _prefix_or_packed(not_null)
        later = np.arange(layout.rounds) >= 1
        found_before = found.rotate(-layout.segment).mul_plain(layout.segment_mask(later))
        weight = found_before.add_plain(layout.segment_mask(np.ones(layout.rounds, bool)))
        res = _segment_sum(weight.mul(pi))
    else:
        res = pi
    outcomes = _decode_blocks(layout.blocks(res.slots)[0], num_classes)
    return outcomes, (d_sel, d_pi, res.depth), layout.used


def _run_unpacked(labels: np.ndarray, aug: np.ndarray, draws, poly: PolyParam,
                  num_slots: int, num_classes: int, counts: OpCounts):
    layout = Layout(num_slots, labels.shape[0], num_classes, 1)
    encrypted = encrypt_teacher_votes(labels, layout, counts)
    pis, d_sel = [], 0
    for r, p in enumerate(poly.rounds):
        passes = []
        for l in range(p):
            sel = np.array([[d[r][l] for d in draws]], dtype=np.int64)
            passes.append(_pass_product(encrypted, aug, sel, layout))
        d_sel = max(d_sel, max(s.depth for s in passes))
        pis.append(product_tree(passes))
    d_pi = max(s.depth for s in pis)
    found = [slot_sum(pi) for pi in pis]
    shift = 1
    while shift < len(found):
        found = [f if r < shift else f.homomorphic_or(found[r - shift])
                 for r, f in enumerate(found)]
        shift *= 2
    all_ones = layout.segment_mask([True])
    res = pis[0]
    for r in range(1, len(pis)):
        res = res.add(found[r - 1].add_plain(all_ones).mul(pis[r]))
    outcomes = _decode_blocks(layout.blocks(res.slots)[0], num_classes)
    return outcomes, (d_sel, d_pi, res.depth), len(pis) * layout.used


def run_circuit(m: VoteMatrix, poly: PolyParam, offset: int = 1, seed: int = 0,
                num_slots: int = DEFAULT_SLOTS, pack_rounds: bool = True,
                draws: Sequence[Sequence[Sequence[int]]] | None = None) -> CircuitResult:
    """Evaluate the batched circuit on every sample of ``m``.

    Draws follow the simulator's seed protocol unless ``draws[i][r]`` gives
    the indices of round ``r`` for sample ``i`` explicitly.  Samples beyond
    the capacity of one ciphertext go to further ciphertexts.
    """
    n_samples, k = m.num_samples, m.num_classes
    aug = np.stack([augmented_labels(m, i, offset) for i in range(n_samples)])
    n_total = aug.shape[1]
    if draws is None:
        draws = [draw_rounds(seed, i, poly, n_total) for i in range(n_samples)]
    if len(draws) != n_samples:
        raise ValidationError("one draw list per sample is required")
    for d in draws:
        if [len(x) for x in d] != list(poly.rounds):
            raise ValidationError("draws do not match the round structure of the polynomial")
        if any(np.any((np.asarray(x) < 0) | (np.asarray(x) >= n_total)) for x in d):
            raise ValidationError("draw index outside the augmented vote list")

    segs = poly.num_rounds if pack_rounds else 1
    cap = capacity(num_slots, k, segs)
    if cap < 1:
        raise CapacityError(
            f"{num_slots} slots cannot hold one sample ({next_pow2(k)} x {segs} slots needed)")
    if num_slots % next_pow2(k):
        raise ValueError("num_slots must be a multiple of K_pad")

    counts = OpCounts()
    labels = m.labels()
    runner = _run_packed if pack_rounds else _run_unpacked
    outcomes: list[int | None] = []
    depths = (0, 0, 0)
    used = 0
    batches = 0
    for start in range(0, n_samples, cap):
        stop = min(start + cap, n_samples)
        out, d, u = runner(labels[start:stop], aug[start:stop], draws[start:stop], poly,
                           num_slots, k, counts)
        outcomes.extend(out)
        depths = tuple(max(a, b) for a, b in zip(depths, d))
        used += u
        batches += 1

    d_sel, d_pi, d_total = depths
    ciphertexts = batches * (1 if pack_rounds else poly.num_rounds)
    cost = CostReport(
        depth=d_total, depth_selection=d_sel, depth_round_product=d_pi - d_sel,
        depth_gating=d_total - d_pi, ct_ct_mults=counts.ct_ct_mults,
        ct_pt_mults=counts.ct_pt_mults, additions=counts.additions,
        rotations=counts.rotations, num_slots=num_slots, k_pad=next_pow2(k),
        rounds_packed=segs, samples=n_samples, samples_per_ciphertext=cap,
        batches=batches, slot_utilization=used / (ciphertexts * num_slots))
    return CircuitResult(outcomes, cost)


def circuit_cost(poly: PolyParam, num_teachers: int, num_classes: int, num_samples: int,
                 offset: int = 1, num_slots: int = DEFAULT_SLOTS,
                 pack_rounds: bool = True) -> CostReport:
    """Closed-form operation counts and depth of :func:`run_circuit`.

    The circuit is data independent, so these equal the counters of any run
    with the same shape.
    """
    k_pad = next_pow2(num_classes)
    log_k = ceil_log2(k_pad)
    rounds = poly.rounds
    a = len(rounds)
    segs = a if pack_rounds else 1
    cap = capacity(num_slots, num_classes, segs)
    if cap < 1:
        raise CapacityError(f"{num_slots} slots cannot hold one sample")
    batches = -(-num_samples // cap)
    n = num_teachers
    dummy = 1 if offset > 0 else 0
    d_sel = ceil_log2(n)

    def pass_cost(num_passes: int) -> tuple[int, int, int]:
        # per pass: select (pt mult) + mask (add) per teacher, teacher tree, dummy plaintext
        return num_passes * (n - 1), num_passes * (n + dummy), num_passes * n

    slot_sum_cost = (0, 1, 2 * log_k, 2 * log_k)  # ct-ct, ct-pt, adds, rotations
    cc = cp = ad = ro = 0
    if pack_rounds:
        D = poly.degree
        c1, p1, a1 = pass_cost(D)
        cc += c1 + (D - 1)
        cp += p1
        ad += a1
        cc, cp, ad, ro = (cc + slot_sum_cost[0], cp + slot_sum_cost[1],
                          ad + slot_sum_cost[2], ro + slot_sum_cost[3])
        d_pi = d_sel + ceil_log2(D)
        d_total = d_pi
        if a > 1:
            steps = ceil_log2(a)
            cc += steps + 1
            cp += steps + 1
            ad += 2 * steps + 1
            ro += steps + 1
            seg_sum = a.bit_length() - 1 + bin(a).count("1") - 1
            ad += seg_sum
            ro += seg_sum
            d_total = d_pi + steps + 1
    else:
        for p in rounds:
            c1, p1, a1 = pass_cost(p)
            cc += c1 + (p - 1)
            cp += p1
            ad += a1
        cc += a * slot_sum_cost[0]
        cp += a * slot_sum_cost[1]
        ad += a * slot_sum_cost[2]
        ro += a * slot_sum_cost[3]
        depth = [d_sel + ceil_log2(p) for p in rounds]
        d_pi = max(depth)
        shift = 1
        while shift < a:
            cc += a - shift
            ad += 2 * (a - shift)
            depth = [d if r < shift else 1 + max(d, depth[r - shift]) for r, d in enumerate(depth)]
            shift *= 2
        cc += a - 1
        ad += 2 * (a - 1)
        pi_depth = [d_sel + ceil_log2(p) for p in rounds]
        finals = [pi_depth[0]] + [1 + max(depth[r - 1], pi_depth[r]) for r in range(1, a)]
        d_total = max(finals)
    used = (num_samples * segs * k_pad) * (1 if pack_rounds else a)
    ciphertexts = batches * (1 if pack_rounds else a)
    return CostReport(
        depth=d_total, depth_selection=d_sel, depth_round_product=d_pi - d_sel,
        depth_gating=d_total - d_pi, ct_ct_mults=cc * batches, ct_pt_mults=cp * batches,
        additions=ad * batches, rotations=ro * batches, num_slots=num_slots, k_pad=k_pad,
        rounds_packed=segs, samples=num_samples, samples_per_ciphertext=cap,
        batches=batches, slot_utilization=used / (ciphertexts * num_slots))
