"""Paintbox mass points and merge-outcome probabilities.

A paintbox is a point x = (x_1, x_2, ...) of nonincreasing nonnegative
frequencies with total at most one; the deficit x_0 = 1 - sum(x) is
dust.  Throwing i labelled balls independently, ball -> box r with
probability x_r and ball -> dust with probability x_0, the merge
outcome is

    Y(i, x) = (# balls in dust) + (# occupied boxes),

the number of blocks left when i blocks are pushed through one
coalescence event driven by x.  This module samples Y, computes its
distribution exactly by enumeration over box subsets and ball
compositions, and samples paintboxes from the driving measures of the
model families that have one.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from .stirling import ExactScalar

__all__ = [
    "AllocationResult",
    "MassPoint",
    "coalesced_count_prob",
    "line_passage_prob",
    "mc_coalesced_count_prob",
    "sample_coalesced_count",
    "sample_paintbox",
]

#: floats whose parts sum to within this of 1 are treated as dust free
DUST_SNAP = 1e-12

#: refuse enumerations beyond this many (subset, composition) terms
TERM_CAP = 100_000_000

Scalar = Union[int, float, Fraction]


@dataclass(frozen=True)
class MassPoint:
    """A single paintbox: positive part frequencies plus implicit dust.

    Parameters
    ----------
    parts : iterable of scalar
        Positive frequencies.  Sorted nonincreasing on construction
        unless ``sort=False`` (samplers keep their natural order).
    sort : bool
        Whether to sort the parts.

    Attributes
    ----------
    parts : tuple
    dust : scalar
        1 - sum(parts).  For float input a deficit smaller than
        ``DUST_SNAP`` is snapped to exactly zero so that dust-free
        classification is stable under rounding.
    """

    parts: tuple
    dust: Scalar = None

    def __init__(self, parts, sort: bool = True):
        parts = tuple(parts)
        for p in parts:
            if not p > 0:
                raise ValueError(f"paintbox parts must be positive, got {p}")
        if sort:
            parts = tuple(sorted(parts, reverse=True))
        exact = all(isinstance(p, ExactScalar) for p in parts)
        total = sum(parts, Fraction(0) if exact else 0.0)
        if exact:
            if total > 1:
                raise ValueError(f"paintbox parts sum to {total} > 1")
            dust = 1 - total
            if isinstance(dust, Fraction) and dust.denominator == 1:
                dust = dust.numerator
        else:
            if total > 1.0 + DUST_SNAP:
                raise ValueError(f"paintbox parts sum to {total} > 1")
            dust = 1.0 - total
            if dust < DUST_SNAP:
                dust = 0.0
                if total > 1.0:
                    # renormalize the few trailing ulps away
                    parts = tuple(p / total for p in parts)
        object.__setattr__(self, "parts", parts)
        object.__setattr__(self, "dust", dust)

    @property
    def is_exact(self) -> bool:
        return all(isinstance(p, ExactScalar) for p in self.parts)

    @property
    def is_proper(self) -> bool:
        """True when the parts carry all mass (no dust)."""
        return self.dust == 0

    @property
    def support_size(self) -> int:
        return len(self.parts)

    def float_probs(self) -> np.ndarray:
        """Dust-first probability vector, renormalized for sampling."""
        p = np.array([float(self.dust)] + [float(x) for x in self.parts])
        return p / p.sum()


@dataclass(frozen=True)
class AllocationResult:
    """One sampled merge outcome.

    ``count`` is Y(i, x); ``box_counts`` maps box index (0 = dust) to
    the number of balls it received, zeros omitted except possibly 0.
    """

    count: int
    box_counts: dict


def sample_coalesced_count(i: int, x: MassPoint, rng) -> AllocationResult:
    """Throw i balls on the paintbox and report the merge outcome."""
    if i < 1:
        raise ValueError(f"need at least one ball, got i={i}")
    counts = rng.multinomial(i, x.float_probs())
    occupied = int((counts[1:] > 0).sum())
    y = int(counts[0]) + occupied
    box_counts = {0: int(counts[0])}
    for r, c in enumerate(counts[1:], start=1):
        if c > 0:
            box_counts[r] = int(c)
    return AllocationResult(count=y, box_counts=box_counts)


def _compositions(total: int, parts: int):
    """Yield tuples of ``parts`` positive integers summing to ``total``."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _term_count(i: int, j: int, m: int) -> int:
    """Number of (subset, composition) terms the enumeration will touch."""
    n = 0
    lo = 0 if j == i else 1
    for k in range(lo, min(j, m) + 1):
        u = i - j + k
        if u < k:
            continue
        # k = 0 is the single all-dust term
        n += math.comb(m, k) * math.comb(u - 1, k - 1) if k else 1
    return n


def _enumerate_terms(i: int, x: MassPoint, j: int, extra_factor: bool):
    """Shared enumeration core for the two outcome probabilities.

    Sums over k occupied boxes, k-subsets of boxes and positive
    compositions of the box-ball count.  With ``extra_factor`` each
    term is weighted by (1 - sum of the occupied frequencies), the
    probability that one more ball avoids every occupied box.

    Exact rational when the paintbox is; float otherwise, switching to
    per-term log evaluation for large ball counts where factorials
    overflow double precision.
    """
    m = x.support_size
    if _term_count(i, j, m) > TERM_CAP:
        raise ValueError(
            f"enumeration for i={i}, j={j}, {m} parts exceeds "
            f"{TERM_CAP} terms; refusing")
    exact = x.is_exact
    use_log = (not exact) and i > 150
    zero = Fraction(0) if exact else 0.0
    total = zero
    fact = math.factorial
    lo = 0 if j == i else 1
    x0 = x.dust
    for k in range(lo, min(j, m) + 1):
        d = j - k          # balls landing in the dust
        u = i - d          # balls landing in occupied boxes
        if d < 0 or u < k:
            continue
        if exact:
            if x0 == 0 and d > 0:
                continue
            base = Fraction(fact(i), fact(d)) * (Fraction(x0) ** d if d else 1)
        elif use_log:
            if x0 == 0.0 and d > 0:
                continue
            base_log = (math.lgamma(i + 1) - math.lgamma(d + 1)
                        + (d * math.log(x0) if d else 0.0))
        else:
            if x0 == 0.0 and d > 0:
                continue
            base = fact(i) / fact(d) * (float(x0) ** d if d else 1.0)
        for subset in itertools.combinations(range(m), k):
            freqs = [x.parts[r] for r in subset]
            if extra_factor:
                w = 1 - sum(freqs, zero if exact else 0.0)
                if w == 0:
                    continue
            for comp in _compositions(u, k):
                if exact:
                    term = base
                    for f, c in zip(freqs, comp):
                        term = term * Fraction(f) ** c / fact(c)
                    if extra_factor:
                        term = term * w
                    total += term
                elif use_log:
                    tl = base_log
                    for f, c in zip(freqs, comp):
                        tl += c * math.log(f) - math.lgamma(c + 1)
                    if extra_factor:
                        tl += math.log(w)
                    total += math.exp(tl)
                else:
                    term = base
                    for f, c in zip(freqs, comp):
                        term = term * float(f) ** c / fact(c)
                    if extra_factor:
                        term *= w
                    total += term
    if isinstance(total, Fraction) and total.denominator == 1:
        return total.numerator
    return total


def coalesced_count_prob(i: int, x: MassPoint, j: int):
    """P(Y(i, x) = j), exact for rational paintboxes.

    Parameters
    ----------
    i : int
        Number of balls (blocks before the event), at least 1.
    j : int
        Outcome block count; values outside [1, i] have probability 0.

    Raises
    ------
    ValueError
        If the enumeration would exceed the term cap.
    """
    if i < 1:
        raise ValueError(f"need at least one ball, got i={i}")
    if j < 1 or j > i:
        return Fraction(0) if x.is_exact else 0.0
    return _enumerate_terms(i, x, j, extra_factor=False)


def line_passage_prob(j: int, x: MassPoint, i: int):
    """P(Y(j, x) = i and Y(j + 1, x) = i + 1), exact for rational x.

    The event that j balls produce i blocks and one further ball
    raises the count, which happens exactly when that ball avoids
    every occupied box.  Requires 1 <= i <= j.
    """
    if j < 1:
        raise ValueError(f"need at least one ball, got j={j}")
    if i < 1 or i > j:
        return Fraction(0) if x.is_exact else 0.0
    return _enumerate_terms(j, x, i, extra_factor=True)


def mc_coalesced_count_prob(i: int, x: MassPoint, j: int, reps: int, rng):
    """Monte Carlo estimate of P(Y(i, x) = j) with its standard error."""
    if reps < 1:
        raise ValueError(f"reps must be positive, got {reps}")
    counts = rng.multinomial(i, x.float_probs(), size=reps)
    y = counts[:, 0] + (counts[:, 1:] > 0).sum(axis=1)
    hits = float((y == j).mean())
    se = math.sqrt(hits * (1.0 - hits) / reps)
    return hits, se


#: GEM stick-breaking truncation controls
STICK_RESIDUAL = 1e-12
STICK_CAP = 10_000


def sample_paintbox(model, rng, residual: float = STICK_RESIDUAL,
                    max_sticks: int = STICK_CAP) -> MassPoint:
    """Draw one paintbox from the driving measure of ``model``.

    Supported families: Dirichlet (symmetric Dirichlet weights),
    PoissonDirichlet (stick breaking, stopped once the remaining
    stick drops below ``residual`` or after ``max_sticks`` sticks)
    and DiracNu (the stored point).  Parts come back in sampling
    order, not sorted.

    The leftover stick of a truncated stick-breaking draw is booked
    as dust.  A ball landing there counts as its own block, which is
    also almost surely what the untruncated paintbox would have done,
    so outcome probabilities for i balls are biased by no more than
    i times the leftover mass; note that for alpha > 0 the stick
    decays only polynomially and the cap, not ``residual``, is what
    usually stops the loop.
    """
    from .models import DiracNu, Dirichlet, PoissonDirichlet

    if isinstance(model, Dirichlet):
        g = rng.gamma(float(model.alpha), size=model.N)
        while g.sum() <= 0.0:  # pragma: no cover (alpha tiny)
            g = rng.gamma(float(model.alpha), size=model.N)
        parts = g / g.sum()
        # guard against exact float zeros from underflow
        parts = parts[parts > 0.0]
        return MassPoint(parts.tolist(), sort=False)
    if isinstance(model, PoissonDirichlet):
        alpha, theta = float(model.alpha), float(model.theta)
        parts: list = []
        stick = 1.0
        drawn = 0
        while drawn < max_sticks and stick >= residual:
            block = min(256, max_sticks - drawn)
            v = rng.beta(np.full(block, 1.0 - alpha),
                         theta + alpha * np.arange(drawn + 1, drawn + block + 1))
            after = stick * np.exp(np.cumsum(np.log1p(-v)))
            piece = np.concatenate(([stick], after[:-1])) * v
            # honor the stopping rule inside the block
            done = np.nonzero(after < residual)[0]
            if done.size:
                cut = done[0] + 1
                piece, after = piece[:cut], after[:cut]
            parts.extend(piece[piece > 0.0].tolist())
            stick = float(after[-1])
            drawn += block
        return MassPoint(parts, sort=False)
    if isinstance(model, DiracNu):
        return model.point
    raise ValueError(
        f"no paintbox sampler for model family {type(model).__name__}")
