"""Jump rates of the block-counting process and of the fixation line.

For a coalescent on i blocks the block-counting process jumps from i
down to j < i at rate q(i, j); the fixation line moves from i up to
j > i at rate gamma(i, j), with an extra jump straight to infinity at
rate equal to the coverage mass of the driving measure.  Every family
gets a closed form: combinatorial for Kingman and atom measures, Beta
ratios in rising-factorial form, paintbox enumeration for the single
mass point family, and generalized Stirling expressions for the
Dirichlet and Poisson-Dirichlet families.

Computations run in exact rational arithmetic whenever the model
parameters are rational, and in log-domain floating point otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np

from . import paintbox as pb
from .models import (
    BetaLambda,
    CoalescentModel,
    DiracNu,
    Dirichlet,
    Kingman,
    LambdaAtoms,
    PoissonDirichlet,
    coverage_mass,
    is_exact_model,
    validate,
)
from .stirling import gen_stirling, rising_factorial, s_alpha, stirling_table

__all__ = [
    "RateValue",
    "TruncationFailure",
    "block_count_rate",
    "block_count_total_rate",
    "block_cumulative_rate",
    "dirichlet_rate_by_compositions",
    "fixation_rate",
    "fixation_rate_to_infinity",
    "fixation_total_rate",
    "fixation_total_rate_by_summation",
    "infinite_start_rate",
    "infinite_start_diagonal",
    "mc_rate_estimate",
]


class TruncationFailure(ArithmeticError):
    """An adaptive truncation could not certify the requested tolerance."""


@dataclass(frozen=True)
class RateValue:
    """A computed rate with provenance.

    ``representation`` is "exact" (value is an int or Fraction) or
    "float".  ``remainder_bound`` carries the certified bound on any
    truncated tail; ``detail`` is a short human-readable note on how
    the value was assembled.
    """

    value: object
    representation: str
    remainder_bound: Optional[float] = None
    detail: Optional[str] = None

    def __float__(self) -> float:
        return float(self.value)


def _wrap(value, exact: bool, remainder=None, detail=None) -> RateValue:
    return RateValue(value, "exact" if exact else "float", remainder, detail)


def _resolve_exact(model: CoalescentModel, exact: Optional[bool]) -> bool:
    if exact is None:
        return is_exact_model(model)
    if exact and not is_exact_model(model):
        raise ValueError(
            "exact rates need rational model parameters; "
            f"got {model!r}")
    return bool(exact)


def _log_rising(x: float, n: int) -> float:
    """log of x (x+1) ... (x+n-1) for x > 0."""
    return math.lgamma(x + n) - math.lgamma(x)


def _demote(x):
    if isinstance(x, Fraction) and x.denominator == 1:
        return int(x)
    return x


# ---------------------------------------------------------------------------
# block-counting rates q(i, j)

@lru_cache(maxsize=500_000)
def _block_rate_raw(model: CoalescentModel, i: int, j: int, exact: bool):
    if isinstance(model, Kingman):
        rate = math.comb(i, 2) if j == i - 1 else 0
        return rate if exact else float(rate)

    if isinstance(model, BetaLambda):
        a, b = model.a, model.b
        if exact:
            num = math.comb(i, j - 1) * rising_factorial(a, 1, i - j - 1) \
                * rising_factorial(b, 1, j - 1)
            return Fraction(num) / rising_factorial(a + b, 1, i - 2)
        a, b = float(a), float(b)
        lg = (math.log(math.comb(i, j - 1))
              + _log_rising(a, i - j - 1) + _log_rising(b, j - 1)
              - _log_rising(a + b, i - 2))
        return math.exp(lg)

    if isinstance(model, LambdaAtoms):
        king = model.kingman_mass if exact else float(model.kingman_mass)
        total = king * math.comb(i, 2) if j == i - 1 else (0 if exact else 0.0)
        binom = math.comb(i, j - 1)
        for x, w in model.atoms:
            if not exact:
                x, w = float(x), float(w)
            if x == 1:
                # only the j = 1 row sees the atom at full coverage
                contrib = w * binom if j == 1 else 0
            else:
                contrib = w * binom * x ** (i - j - 1) * (1 - x) ** (j - 1)
            total = total + contrib
        return total

    if isinstance(model, DiracNu):
        w = model.weight if exact else float(model.weight)
        point = model.point
        if exact and not point.is_exact:
            raise ValueError("exact rates need a rational paintbox")
        prob = pb.coalesced_count_prob(i, point, j)
        if not exact:
            prob = float(prob)
        return w * prob

    if isinstance(model, Dirichlet):
        N, alpha = model.N, model.alpha
        if j > N:
            return 0 if exact else 0.0
        if exact:
            alpha = Fraction(alpha)
            stir = gen_stirling(i, j, -1, alpha, 0)
            # product (N-j+1)a (N-j+2)a ... Na, the descending-step factor
            num = Fraction(rising_factorial((N - j + 1) * alpha, alpha, j)) * stir
            return num / rising_factorial(N * alpha, 1, i)
        af = float(alpha)
        # falling product (N a | a)_j = a^j N! / (N-j)!
        log_fall = j * math.log(af) + math.lgamma(N + 1) - math.lgamma(N - j + 1)
        stir = stirling_table(-1.0, af, 0.0).value(i, j)
        if stir.sign == 0:
            return 0.0
        return math.exp(log_fall + stir.logmag - _log_rising(N * af, i))

    if isinstance(model, PoissonDirichlet):
        alpha, theta = model.alpha, model.theta
        if exact:
            stir = gen_stirling(i, j, -1, -Fraction(alpha), 0)
            # leading factors theta/theta are cancelled analytically so
            # that theta = 0 works
            num = Fraction(rising_factorial(theta + alpha, alpha, j - 1)) * stir
            return num / rising_factorial(theta + 1, 1, i - 1)
        af, tf = float(alpha), float(theta)
        sa = s_alpha(i, j, af)
        if sa.sign == 0:
            return 0.0
        # log of c_j Gamma(theta + alpha j), in product form with the
        # theta/theta factor cancelled
        log_pref = sum(math.log(tf + k * af) for k in range(1, j)) \
            - j * math.lgamma(1.0 - af)
        return math.exp(log_pref + sa.logmag
                        - (math.lgamma(tf + i) - math.lgamma(tf + 1.0)))

    raise ValueError(f"not a coalescent model: {model!r}")


def block_count_rate(model: CoalescentModel, i: int, j: int,
                     exact: Optional[bool] = None) -> RateValue:
    """Rate q(i, j) at which i blocks merge down to j blocks.

    Requires 1 <= j < i; asking for j >= i is a domain error rather
    than zero, to catch transposed arguments early.
    """
    validate(model)
    if not isinstance(i, int) or not isinstance(j, int) or i < 2 or not 1 <= j < i:
        raise ValueError(
            f"block-count rates need integers 1 <= j < i with i >= 2, "
            f"got i={i}, j={j}")
    ex = _resolve_exact(model, exact)
    return _wrap(_block_rate_raw(model, i, j, ex), ex)


@lru_cache(maxsize=200_000)
def _block_cumulative_raw(model: CoalescentModel, i: int, jmax: int, exact: bool):
    total = 0 if exact else 0.0
    for l in range(1, jmax + 1):
        total = total + _block_rate_raw(model, i, l, exact)
    return total


def block_cumulative_rate(model: CoalescentModel, i: int, jmax: int,
                          exact: Optional[bool] = None) -> RateValue:
    """Cumulative rate from i into the set {1..jmax}, jmax < i."""
    validate(model)
    if not 1 <= jmax < i:
        raise ValueError(f"need 1 <= jmax < i, got i={i}, jmax={jmax}")
    ex = _resolve_exact(model, exact)
    return _wrap(_block_cumulative_raw(model, i, jmax, ex), ex)


@lru_cache(maxsize=100_000)
def _block_total_raw(model: CoalescentModel, i: int, exact: bool):
    if i == 1:
        return 0 if exact else 0.0
    if isinstance(model, Kingman):
        rate = math.comb(i, 2)
        return rate if exact else float(rate)
    if isinstance(model, Dirichlet):
        N, alpha = model.N, model.alpha
        if not exact:
            alpha = float(alpha)
        stay = Fraction(1) if exact else 1.0
        for k in range(i):
            num = (N - k) * alpha
            if num <= 0:
                stay = stay * 0
                break
            stay = stay * num / (N * alpha + k)
        return _demote(1 - stay) if exact else 1.0 - stay
    if isinstance(model, PoissonDirichlet):
        alpha, theta = model.alpha, model.theta
        if not exact:
            alpha, theta = float(alpha), float(theta)
        stay = Fraction(1) if exact else 1.0
        # the k = 0 factor theta/theta is one; skipping it keeps
        # theta = 0 well defined
        for k in range(1, i):
            stay = stay * (theta + k * alpha) / (theta + k)
        return _demote(1 - stay) if exact else 1.0 - stay
    if isinstance(model, LambdaAtoms):
        king = model.kingman_mass if exact else float(model.kingman_mass)
        total = king * math.comb(i, 2)
        for x, w in model.atoms:
            if not exact:
                x, w = float(x), float(w)
            one = 1 if exact else 1.0
            total = total + w / x ** 2 * (
                one - (1 - x) ** i - i * x * (1 - x) ** (i - 1))
        return total
    if isinstance(model, (BetaLambda, DiracNu)):
        # row sums are finite and exact; no neater closed form needed
        return _block_cumulative_raw(model, i, i - 1, exact)
    raise ValueError(f"not a coalescent model: {model!r}")


def block_count_total_rate(model: CoalescentModel, i: int,
                           exact: Optional[bool] = None) -> RateValue:
    """Total jump rate out of i blocks (zero at the absorbing state 1).

    Closed forms per family where available, otherwise the finite row
    sum; the two agree exactly and tests pin that down.
    """
    validate(model)
    if not isinstance(i, int) or i < 1:
        raise ValueError(f"block count must be a positive integer, got {i}")
    ex = _resolve_exact(model, exact)
    return _wrap(_block_total_raw(model, i, ex), ex)


# ---------------------------------------------------------------------------
# fixation-line rates gamma(i, j)

@lru_cache(maxsize=500_000)
def _fixation_rate_raw(model: CoalescentModel, i: int, j: int, exact: bool):
    if isinstance(model, Kingman):
        rate = math.comb(j, 2) if j == i + 1 else 0
        return rate if exact else float(rate)

    if isinstance(model, BetaLambda):
        a, b = model.a, model.b
        if exact:
            num = math.comb(j, i - 1) * rising_factorial(a, 1, j - i - 1) \
                * rising_factorial(b, 1, i)
            return Fraction(num) / rising_factorial(a + b, 1, j - 1)
        a, b = float(a), float(b)
        lg = (math.log(math.comb(j, i - 1))
              + _log_rising(a, j - i - 1) + _log_rising(b, i)
              - _log_rising(a + b, j - 1))
        return math.exp(lg)

    if isinstance(model, LambdaAtoms):
        king = model.kingman_mass if exact else float(model.kingman_mass)
        total = king * math.comb(j, 2) if j == i + 1 else (0 if exact else 0.0)
        binom = math.comb(j, i - 1)
        for x, w in model.atoms:
            if not exact:
                x, w = float(x), float(w)
            if x == 1:
                continue  # full coverage drives the jump to infinity instead
            total = total + w * binom * x ** (j - i - 1) * (1 - x) ** i
        return total

    if isinstance(model, DiracNu):
        w = model.weight if exact else float(model.weight)
        point = model.point
        if exact and not point.is_exact:
            raise ValueError("exact rates need a rational paintbox")
        prob = pb.line_passage_prob(j, point, i)
        if not exact:
            prob = float(prob)
        return w * prob

    if isinstance(model, Dirichlet):
        N, alpha = model.N, model.alpha
        if i >= N:
            return 0 if exact else 0.0
        if exact:
            alpha = Fraction(alpha)
            stir = gen_stirling(j, i, -1, alpha, 0)
            num = Fraction(rising_factorial((N - i) * alpha, alpha, i + 1)) * stir
            return num / rising_factorial(N * alpha, 1, j + 1)
        af = float(alpha)
        log_fall = ((i + 1) * math.log(af)
                    + math.lgamma(N + 1) - math.lgamma(N - i))
        stir = stirling_table(-1.0, af, 0.0).value(j, i)
        if stir.sign == 0:
            return 0.0
        return math.exp(log_fall + stir.logmag - _log_rising(N * af, j + 1))

    if isinstance(model, PoissonDirichlet):
        alpha, theta = model.alpha, model.theta
        if exact:
            stir = gen_stirling(j, i, -1, -Fraction(alpha), 0)
            # theta/theta leading factors cancelled, as in the block rate
            num = Fraction(rising_factorial(theta + alpha, alpha, i)) * stir
            return num / rising_factorial(theta + 1, 1, j)
        af, tf = float(alpha), float(theta)
        sa = s_alpha(j, i, af)
        if sa.sign == 0:
            return 0.0
        log_pref = sum(math.log(tf + k * af) for k in range(1, i + 1)) \
            - i * math.lgamma(1.0 - af)
        return math.exp(log_pref + sa.logmag
                        - (math.lgamma(tf + j + 1) - math.lgamma(tf + 1.0)))

    raise ValueError(f"not a coalescent model: {model!r}")


def fixation_rate(model: CoalescentModel, i: int, j: int,
                  exact: Optional[bool] = None) -> RateValue:
    """Rate gamma(i, j) at which the fixation line moves from i to j > i.

    Asking for j <= i is a domain error rather than zero.  The jump
    to infinity is a separate quantity, see
    :func:`fixation_rate_to_infinity`.
    """
    validate(model)
    if not isinstance(i, int) or not isinstance(j, int) or i < 1 or j <= i:
        raise ValueError(
            f"fixation rates need integers 1 <= i < j, got i={i}, j={j}")
    ex = _resolve_exact(model, exact)
    return _wrap(_fixation_rate_raw(model, i, j, ex), ex)


def fixation_rate_to_infinity(model: CoalescentModel, i: int,
                              exact: Optional[bool] = None) -> RateValue:
    """Rate of the direct jump from i to infinity (the coverage mass)."""
    validate(model)
    if not isinstance(i, int) or i < 1:
        raise ValueError(f"state must be a positive integer, got {i}")
    ex = _resolve_exact(model, exact)
    mass = coverage_mass(model, i)
    return _wrap(mass if ex else float(mass), ex)


def fixation_total_rate(model: CoalescentModel, i: int,
                        exact: Optional[bool] = None) -> RateValue:
    """Total fixation-line rate out of i; equals the block total at i + 1.

    The identity gamma_i = q_{i+1} is structural: both count the
    events that disturb the first i + 1 blocks.  An independent
    summation route is provided separately, see
    :func:`fixation_total_rate_by_summation`.
    """
    validate(model)
    if not isinstance(i, int) or i < 1:
        raise ValueError(f"state must be a positive integer, got {i}")
    ex = _resolve_exact(model, exact)
    return _wrap(_block_total_raw(model, i + 1, ex), ex)


def fixation_total_rate_by_summation(
        model: CoalescentModel, i: int, tol: float = 1e-12,
        max_terms: int = 200_000, tail: str = "telescoped",
        exact: Optional[bool] = None) -> RateValue:
    """Total fixation-line rate by summing the row, with a handled tail.

    Adds gamma(i, j) for j = i+1, i+2, ... plus the jump rate to
    infinity.  The infinite remainder beyond the last summed column K
    equals the cumulative block rate from K + 1 into {1..i} minus the
    coverage mass at i (each row entry telescopes two consecutive
    cumulative block rates, and those decrease to the coverage mass).

    tail="telescoped" adds that remainder exactly and records it in
    ``remainder_bound``; tail="bound" instead grows K until the
    remainder is below ``tol`` and raises :class:`TruncationFailure`
    if ``max_terms`` columns do not get there.
    """
    validate(model)
    if tail not in ("telescoped", "bound"):
        raise ValueError(f"tail must be 'telescoped' or 'bound', got {tail!r}")
    ex = _resolve_exact(model, exact)
    cov = coverage_mass(model, i)
    if not ex:
        cov = float(cov)
    if isinstance(model, Kingman):
        # single superdiagonal entry, nothing to truncate
        val = _fixation_rate_raw(model, i, i + 1, ex)
        return _wrap(val + cov, ex, 0.0, "single entry")
    partial = 0 if ex else 0.0
    K = i + 64 if tail == "telescoped" else i + 16
    j = i + 1
    while True:
        while j <= K:
            partial = partial + _fixation_rate_raw(model, i, j, ex)
            j += 1
        remainder = _block_cumulative_raw(model, K + 1, i, ex) - cov
        if tail == "telescoped":
            return _wrap(partial + remainder + cov, ex, float(remainder),
                         "tail added from telescoped cumulative block rates")
        if float(remainder) < tol:
            return _wrap(partial + cov, ex, float(remainder),
                         f"tail below {tol} after {K - i} columns")
        if K - i >= max_terms:
            raise TruncationFailure(
                f"fixation row tail still {float(remainder):.3e} after "
                f"{K - i} columns (target {tol})")
        K = min(i + max_terms, 2 * K)


# ---------------------------------------------------------------------------
# the infinite-start row

def infinite_start_rate(model: CoalescentModel, j: int,
                        exact: Optional[bool] = None) -> RateValue:
    """Rate from the infinite state straight into j finite blocks."""
    validate(model)
    if not isinstance(j, int) or j < 1:
        raise ValueError(f"target must be a positive integer, got {j}")
    ex = _resolve_exact(model, exact)
    val = coverage_mass(model, j) - coverage_mass(model, j - 1)
    return _wrap(val if ex else float(val), ex)


def infinite_start_diagonal(model: CoalescentModel,
                            exact: Optional[bool] = None) -> RateValue:
    """Generator diagonal at infinity: minus the total escape rate."""
    from .models import finite_coverage_mass

    validate(model)
    ex = _resolve_exact(model, exact)
    val = -finite_coverage_mass(model)
    return _wrap(val if ex else float(val), ex)


# ---------------------------------------------------------------------------
# second route for the Dirichlet family and Monte Carlo estimates

def dirichlet_rate_by_compositions(model: Dirichlet, i: int, j: int) -> RateValue:
    """Dirichlet block rate summed directly over part compositions.

    Independent of the Stirling-recursion route: sums the symmetric
    Dirichlet moment formula over all positive compositions of i into
    j parts.  Always exact; requires rational alpha.
    """
    validate(model)
    if not isinstance(model, Dirichlet):
        raise ValueError("composition route is specific to the Dirichlet family")
    if not 1 <= j < i:
        raise ValueError(f"need 1 <= j < i, got i={i}, j={j}")
    alpha = Fraction(model.alpha)
    N = model.N
    if j > N:
        return RateValue(Fraction(0), "exact")
    total = Fraction(0)
    for comp in pb._compositions(i, j):
        prod = Fraction(1)
        for c in comp:
            # C(c + alpha - 1, c) as a rising-factorial ratio
            prod *= Fraction(rising_factorial(alpha, 1, c), math.factorial(c))
        total += prod
    denom = Fraction(rising_factorial(N * alpha, 1, i)) / math.factorial(i)
    value = math.comb(N, j) * total / denom
    return RateValue(value, "exact", detail="composition sum route")


def mc_rate_estimate(model: CoalescentModel, i: int, j: int, reps: int, rng,
                     line: bool = False):
    """Monte Carlo rate estimate over sampled paintboxes.

    Averages the exact conditional outcome probability when the
    sampled paintboxes have small finite support (Dirichlet and single
    mass point families) and an indicator of the sampled outcome
    otherwise (Poisson-Dirichlet, whose stick samples are long).  With
    ``line=True`` the fixation-line rate gamma(i, j) is estimated for
    j > i, else the block rate q(i, j) for j < i.

    Returns (estimate, standard error).
    """
    validate(model)
    if reps < 1:
        raise ValueError(f"reps must be positive, got {reps}")
    if line:
        if not 1 <= i < j:
            raise ValueError(f"line rates need i < j, got i={i}, j={j}")
    else:
        if not 1 <= j < i:
            raise ValueError(f"block rates need j < i, got i={i}, j={j}")
    if isinstance(model, (Dirichlet, DiracNu)):
        weight = float(model.weight) if isinstance(model, DiracNu) else 1.0
        vals = []
        for _ in range(reps):
            x = pb.sample_paintbox(model, rng)
            if line:
                p = float(pb.line_passage_prob(j, x, i))
            else:
                p = float(pb.coalesced_count_prob(i, x, j))
            vals.append(weight * p)
        mean = sum(vals) / reps
        var = sum((v - mean) ** 2 for v in vals) / max(reps - 1, 1)
        return mean, math.sqrt(var / reps)
    if isinstance(model, PoissonDirichlet):
        hits = 0
        for _ in range(reps):
            x = pb.sample_paintbox(model, rng)
            if line:
                probs = x.float_probs()
                cum = probs.cumsum()
                draws = np.searchsorted(cum, rng.random(j + 1), side="right")
                head = draws[:j]
                y_head = int((head == 0).sum()) + len({d for d in head if d > 0})
                boxes = {d for d in head if d > 0}
                last = draws[j]
                grew = last == 0 or last not in boxes
                if y_head == i and grew:
                    hits += 1
            else:
                res = pb.sample_coalesced_count(i, x, rng)
                if res.count == j:
                    hits += 1
        p = hits / reps
        return p, math.sqrt(p * (1.0 - p) / reps)
    raise ValueError(
        "Monte Carlo rate estimates need a paintbox sampler "
        f"(Dirichlet, PoissonDirichlet or DiracNu), got {type(model).__name__}")
