"""Seating-process laws, simulation of both dual chains, and the
Monte Carlo experiment harness.

The falling chain (block count) and the rising chain (fixation line)
are simulated from their rate rows.  Small windows reuse the exact
rate machinery; large state spaces go through closed-form or
recursive cumulative laws that scale past the exact tables.  The two
routes are cross-checked against each other in the tests, so the
scalable rows inherit the correctness of the exact ones.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Union

import numpy as np
from scipy.special import betainc, gammaincc, gammaln

from .duality import INF_STATE
from .kernels import PackedChain, PathBatch, path_seeds, run_paths
from .models import (
    BetaLambda,
    CoalescentModel,
    DiracNu,
    Dirichlet,
    Kingman,
    LambdaAtoms,
    PoissonDirichlet,
    coverage_mass,
    dust_classification,
    is_exact_model,
    laplace_exponent,
    validate,
)
from .rates import _resolve_exact

Number = Union[int, float, Fraction]

SEATING_FAMILIES = (Dirichlet, PoissonDirichlet)


class RowSamplingError(RuntimeError):
    """A rising-chain row could not be resolved within the term cap."""


# ---------------------------------------------------------------------------
# seating rule and table-count laws


@dataclass(frozen=True)
class CrpChainSpec:
    """Seating rule of a table-count chain.

    Wraps one of the two seating families and exposes the chance
    p_k(n) that arrival n+1 opens a new table when k tables are
    occupied.
    """

    model: CoalescentModel

    def __post_init__(self):
        validate(self.model)
        if not isinstance(self.model, SEATING_FAMILIES):
            raise ValueError(
                f"{type(self.model).__name__} has no seating construction")

    def step_prob(self, k: int, n: int,
                  exact: Optional[bool] = None) -> Number:
        return new_table_prob(self.model, k, n, exact)

    @property
    def support(self) -> float:
        """Largest reachable table count (infinite when unbounded)."""
        if isinstance(self.model, Dirichlet):
            return self.model.N
        return math.inf


def new_table_prob(model: CoalescentModel, k: int, n: int,
                   exact: Optional[bool] = None) -> Number:
    """Probability that arrival n+1 opens a new table given k tables.

    The first arrival always opens a table, which keeps the
    zero-strength case well posed.
    """
    validate(model)
    if k < 0 or n < 0 or k > n or (n > 0 and k == 0):
        raise ValueError(f"need 1 <= k <= n (or k = n = 0), "
                         f"got k={k}, n={n}")
    ex = _resolve_exact(model, exact)
    if n == 0:
        return Fraction(1) if ex else 1.0
    if isinstance(model, Dirichlet):
        N = model.N
        if k > N:
            raise ValueError(f"table count {k} exceeds the {N} available")
        a = Fraction(model.alpha) if ex else float(model.alpha)
        return (N - k) * a / (N * a + n)
    if isinstance(model, PoissonDirichlet):
        if ex:
            a, t = Fraction(model.alpha), Fraction(model.theta)
        else:
            a, t = float(model.alpha), float(model.theta)
        return (t + k * a) / (t + n)
    raise ValueError(
        f"{type(model).__name__} has no seating construction")


def crp_distribution(chain, n: int, exact: Optional[bool] = None) -> list:
    """Law of the table count after n arrivals.

    Accepts a seating model or a :class:`CrpChainSpec`.  Returns a
    list of length n+1 whose entry j is P(count = j); entry 0 is zero.
    Exact mode returns Fractions summing to one exactly.
    """
    model = chain.model if isinstance(chain, CrpChainSpec) else chain
    validate(model)
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if not isinstance(model, SEATING_FAMILIES):
        raise ValueError(
            f"{type(model).__name__} has no seating construction")
    ex = _resolve_exact(model, exact)
    zero = Fraction(0) if ex else 0.0
    one = Fraction(1) if ex else 1.0
    support = min(n, model.N) if isinstance(model, Dirichlet) else n
    probs = [zero] * (n + 1)
    probs[1] = one
    for m in range(1, n):
        nxt = [zero] * (n + 1)
        for k in range(1, min(m, support) + 1):
            p = probs[k]
            if p == zero:
                continue
            up = new_table_prob(model, k, m, ex)
            if k + 1 <= support:
                nxt[k + 1] += p * up
            nxt[k] += p * (one - up)
        probs = nxt
    return probs


def expected_tables(model: CoalescentModel, n: int,
                    exact: Optional[bool] = None) -> Number:
    """Mean table count after n arrivals, by the one-step recursion."""
    validate(model)
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    ex = _resolve_exact(model, exact)
    mean = Fraction(1) if ex else 1.0
    if isinstance(model, Dirichlet):
        N = model.N
        a = Fraction(model.alpha) if ex else float(model.alpha)
        for m in range(1, n):
            mean = mean + (N - mean) * a / (N * a + m)
        return mean
    if isinstance(model, PoissonDirichlet):
        a = Fraction(model.alpha) if ex else float(model.alpha)
        t = Fraction(model.theta) if ex else float(model.theta)
        for m in range(1, n):
            mean = mean + (t + a * mean) / (t + m)
        return mean
    raise ValueError(
        f"{type(model).__name__} has no seating construction")


# ---------------------------------------------------------------------------
# scalable cumulative rate laws
#
# cum_block_rate_large(model, i, ms) is the total rate at which the
# falling chain moves from m blocks into {1..i}, vectorized over m
# and free of the exact-table row cap.  For the seating families this
# is the table-count CDF; for atom-driven measures it reduces to
# binomial functionals of the paintbox, evaluated through the
# regularized incomplete beta function.


def _binom_cdf_vec(ms: np.ndarray, c: int, p: float) -> np.ndarray:
    """P(Bin(m, p) <= c) for each m in the array."""
    msf = ms.astype(np.float64)
    if c < 0:
        return np.zeros(ms.shape)
    if p <= 0.0:
        return np.ones(ms.shape)
    if p >= 1.0:
        return np.where(msf <= c, 1.0, 0.0)
    out = np.ones(ms.shape)
    big = msf > c
    if np.any(big):
        out[big] = betainc(msf[big] - c, c + 1.0, 1.0 - p)
    return out


def _dirichlet_count_cdf(N: int, alpha: float, i: int,
                         ms: np.ndarray) -> np.ndarray:
    """P(table count after m arrivals <= i), in closed form.

    Occupancy inclusion-exclusion: the chance that all arrivals sit
    inside a fixed set of r boxes is a ratio of rising factorials,
    and the CDF is an integer combination of those ratios.
    """
    j = min(i, N)
    if j >= N:
        return np.ones(ms.shape)
    coef = [0] * (j + 1)
    for size in range(1, j + 1):
        for r in range(1, size + 1):
            coef[r] += (-1) ** (size - r) * math.comb(N, size) \
                * math.comb(size, r)
    mf = ms.astype(np.float64)
    out = np.zeros(ms.shape)
    for r in range(1, j + 1):
        if coef[r] == 0:
            continue
        log_a = (gammaln(r * alpha + mf) - gammaln(r * alpha)
                 - gammaln(N * alpha + mf) + gammaln(N * alpha))
        out += coef[r] * np.exp(log_a)
    return np.clip(out, 0.0, 1.0)


def _pd_count_cdf(alpha: float, theta: float, i: int,
                  ms: np.ndarray) -> np.ndarray:
    """P(table count after m arrivals <= i), by forward recursion.

    Tracks the pmf only up to i; mass that grows past i leaks out of
    the vector, which is exactly what the CDF ignores.
    """
    top = int(ms.max())
    pmf = np.zeros(i + 1)
    pmf[1] = 1.0
    out = np.empty(ms.shape)
    lookup = {int(m): idx for idx, m in enumerate(ms)}
    ks = np.arange(i + 1, dtype=np.float64)
    for m in range(1, top):
        up = (theta + ks * alpha) / (theta + m)
        nxt = pmf * (1.0 - up)
        nxt[1:] += pmf[:-1] * up[:-1]
        pmf = nxt
        idx = lookup.get(m + 1)
        if idx is not None:
            out[idx] = pmf.sum()
    return np.clip(out, 0.0, 1.0)


def _submasks(mask: int):
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


def _atom_occupancy_cdf(parts, dust: float, i: int,
                        ms: np.ndarray) -> np.ndarray:
    """P(dust balls + occupied boxes <= i after m balls), per m.

    Inclusion-exclusion over the occupied subset; every term is a
    binomial CDF scaled by a power of the retained mass, so a single
    evaluation stays cheap at any m.
    """
    k0 = len(parts)
    msf = ms.astype(np.float64)
    out = np.zeros(ms.shape)
    for mask in range(2 ** k0):
        size = mask.bit_count()
        if size > i:
            continue
        cap = i - size
        for sub in _submasks(mask):
            q = sum(parts[a] for a in range(k0) if sub >> a & 1)
            s = dust + q
            if s <= 0.0:
                continue
            sign = (-1) ** (size - sub.bit_count())
            scale = np.exp(msf * math.log(s)) if s < 1.0 \
                else np.ones(ms.shape)
            out += sign * scale * _binom_cdf_vec(ms, cap, dust / s)
    return np.clip(out, 0.0, 1.0)


def _beta_cum_rate(a: float, b: float, i: int, ms: np.ndarray) -> np.ndarray:
    """Total collision rate from m blocks into {1..i} for Beta measures."""
    lb = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    out = np.zeros(ms.shape)
    for idx, m in enumerate(ms.tolist()):
        # merging k of m blocks lands on m - k + 1, so targets at or
        # below i need k >= m - i + 1
        ks = np.arange(max(2, m - i + 1), m + 1, dtype=np.float64)
        logc = (gammaln(m + 1.0) - gammaln(ks + 1.0)
                - gammaln(m - ks + 1.0))
        logl = (gammaln(ks - 2.0 + a) + gammaln(m - ks + b)
                - gammaln(m - 2.0 + a + b) - lb)
        out[idx] = float(np.exp(logc + logl).sum())
    return out


def cum_block_rate_large(model: CoalescentModel, i: int, ms) -> np.ndarray:
    """Falling-chain cumulative rates into {1..i}, vectorized over m.

    Float route with no table cap; agrees with the exact cumulative
    rates wherever both are defined.  Needs every m > i >= 1.
    """
    validate(model)
    ms = np.atleast_1d(np.asarray(ms, dtype=np.int64))
    if ms.size == 0 or i < 1 or int(ms.min()) <= i:
        raise ValueError("need every m > i >= 1")
    if isinstance(model, Kingman):
        return np.where(ms == i + 1, i * (i + 1) / 2.0, 0.0)
    if isinstance(model, Dirichlet):
        return _dirichlet_count_cdf(model.N, float(model.alpha), i, ms)
    if isinstance(model, PoissonDirichlet):
        return _pd_count_cdf(float(model.alpha), float(model.theta), i, ms)
    if isinstance(model, DiracNu):
        parts = [float(x) for x in model.point.parts]
        dust = float(model.point.dust)
        return float(model.weight) * _atom_occupancy_cdf(parts, dust, i, ms)
    if isinstance(model, LambdaAtoms):
        msf = ms.astype(np.float64)
        out = np.zeros(ms.shape)
        for x, wt in model.atoms:
            xf = float(x)
            # a single-box paintbox catching c of m balls moves the
            # chain to m - c + 1, so landing at or below i means at
            # least m - i + 1 catches
            out += float(wt) / xf ** 2 * betainc(msf - i + 1.0, float(i), xf)
        kap = float(model.kingman_mass)
        if kap:
            out += np.where(ms == i + 1, kap * i * (i + 1) / 2.0, 0.0)
        return out
    if isinstance(model, BetaLambda):
        return _beta_cum_rate(float(model.a), float(model.b), i, ms)
    raise ValueError(f"not a coalescent model: {model!r}")


def total_rate_large(model: CoalescentModel, i: int) -> float:
    """Total falling rate from i+1 blocks (also the rising rate at i)."""
    return float(cum_block_rate_large(model, i, [i + 1])[0])


# ---------------------------------------------------------------------------
# packed chain builders


def _seating_falling_rows(model, n: int):
    """Rate rows for the seating families by one pmf sweep.

    The row for state m is the table-count law after m arrivals,
    restricted to j < m; its sum is the total rate, since staying put
    is the only excluded outcome.
    """
    if isinstance(model, Dirichlet):
        kmax = min(model.N, n)
        a, N = float(model.alpha), model.N

        def grow(ks, m):
            return np.clip((N - ks) * a / (N * a + m), 0.0, 1.0)
    else:
        kmax = n
        a, t = float(model.alpha), float(model.theta)

        def grow(ks, m):
            return np.clip((t + ks * a) / (t + m), 0.0, 1.0)

    rows = []
    pmf = np.zeros(kmax + 2)
    pmf[1] = 1.0
    ks = np.arange(kmax + 2, dtype=np.float64)
    for m in range(1, n):
        up = grow(ks, m)
        nxt = pmf * (1.0 - up)
        nxt[1:] += (pmf * up)[:-1]
        pmf = nxt
        # pmf now holds the law after m+1 arrivals; the row for state
        # m+1 covers targets 1..m
        row = np.zeros(m)
        stop = min(kmax, m)
        row[:stop] = pmf[1:stop + 1]
        rows.append(row)
    return rows


def _dirac_falling_rows(model: DiracNu, n: int):
    """Rate rows for a single-paintbox measure.

    The landing state is (dust balls) + (occupied boxes); the dust
    count is binomial and the occupied-box law comes from subset
    inclusion-exclusion, combined by a shifted convolution.
    """
    parts = np.array([float(x) for x in model.point.parts])
    dust = float(model.point.dust)
    w = float(model.weight)
    k0 = parts.size
    atom_sum = float(parts.sum())
    cs = np.arange(n + 1, dtype=np.float64)
    occ = np.zeros((n + 1, k0 + 1))
    for mask in range(2 ** k0):
        r = mask.bit_count()
        share = float(parts[[a for a in range(k0) if mask >> a & 1]].sum())
        frac = share / atom_sum
        if frac <= 0.0:
            pw = np.zeros(n + 1)
            pw[0] = 1.0
        elif frac >= 1.0:
            pw = np.ones(n + 1)
        else:
            pw = np.exp(cs * math.log(frac))
        for size in range(r, k0 + 1):
            occ[:, size] += (-1) ** (size - r) \
                * math.comb(k0 - r, size - r) * pw
    np.clip(occ, 0.0, None, out=occ)
    rows = []
    for m in range(2, n + 1):
        if dust <= 0.0:
            binpmf = np.zeros(m + 1)
            binpmf[0] = 1.0
        else:
            ds = np.arange(m + 1, dtype=np.float64)
            logb = (gammaln(m + 1.0) - gammaln(ds + 1.0)
                    - gammaln(m - ds + 1.0)
                    + ds * math.log(dust) + (m - ds) * math.log(atom_sum))
            binpmf = np.exp(logb)
        ypmf = np.zeros(m + k0 + 1)
        for size in range(k0 + 1):
            # d dust balls pair with the occupancy of the m - d others
            ypmf[size:size + m + 1] += binpmf * occ[m::-1, size]
        rows.append(w * ypmf[1:m])
    return rows


def _lambda_atoms_falling_rows(model: LambdaAtoms, n: int):
    rows = [np.zeros(m - 1) for m in range(2, n + 1)]
    for x, wt in model.atoms:
        xf = float(x)
        lam = float(wt) / xf ** 2
        for idx, m in enumerate(range(2, n + 1)):
            if xf >= 1.0:
                pmf = np.zeros(m - 1)
                pmf[-1] = 1.0
            else:
                cs = np.arange(2, m + 1, dtype=np.float64)
                logp = (gammaln(m + 1.0) - gammaln(cs + 1.0)
                        - gammaln(m - cs + 1.0)
                        + cs * math.log(xf) + (m - cs) * math.log1p(-xf))
                pmf = np.exp(logp)
            # c catches move m blocks to m - c + 1, so reversing the
            # pmf over c = 2..m lines it up with targets 1..m-1
            rows[idx] += lam * pmf[::-1]
    kap = float(model.kingman_mass)
    if kap:
        for idx, m in enumerate(range(2, n + 1)):
            rows[idx][-1] += kap * m * (m - 1) / 2.0
    return rows


def _falling_rows(model: CoalescentModel, n: int):
    """Rate rows q(m, .) over targets 1..m-1 for every state m = 2..n."""
    if isinstance(model, Kingman):
        return [np.array([0.0] * (m - 2) + [m * (m - 1) / 2.0])
                for m in range(2, n + 1)]
    if isinstance(model, SEATING_FAMILIES):
        return _seating_falling_rows(model, n)
    if isinstance(model, DiracNu):
        return _dirac_falling_rows(model, n)
    if isinstance(model, LambdaAtoms):
        return _lambda_atoms_falling_rows(model, n)
    if isinstance(model, BetaLambda):
        a, b = float(model.a), float(model.b)
        lb = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
        rows = []
        for m in range(2, n + 1):
            ks = np.arange(2, m + 1, dtype=np.float64)
            logc = (gammaln(m + 1.0) - gammaln(ks + 1.0)
                    - gammaln(m - ks + 1.0))
            logl = (gammaln(ks - 2.0 + a) + gammaln(m - ks + b)
                    - gammaln(m - 2.0 + a + b) - lb)
            rows.append(np.exp(logc + logl)[::-1])
        return rows
    raise ValueError(f"not a coalescent model: {model!r}")


@lru_cache(maxsize=8)
def build_falling_chain(model: CoalescentModel, n: int) -> PackedChain:
    """Pack the falling chain on {1..n}; the state index is the block
    count, state 1 absorbs, index 0 is unused.

    Exit rates are the row sums, so the packed chain is consistent by
    construction at any size.
    """
    validate(model)
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    row_ptr = [0, 0, 0]
    col: list = []
    cum: list = []
    exit_rate = [0.0, 0.0]
    for row in _falling_rows(model, n):
        nz = np.nonzero(row > 0.0)[0]
        rates = row[nz]
        tot = float(rates.sum())
        exit_rate.append(tot)
        if tot > 0.0:
            c = np.cumsum(rates) / tot
            c[-1] = 1.0
            col.extend((nz + 1).tolist())
            cum.extend(c.tolist())
        row_ptr.append(len(col))
    return PackedChain(np.array(row_ptr, dtype=np.int64),
                       np.array(col, dtype=np.int64),
                       np.array(cum), np.array(exit_rate))


@lru_cache(maxsize=8)
def build_rising_chain(model: CoalescentModel,
                       threshold: int) -> PackedChain:
    """Pack the rising chain on levels {1..threshold-1} plus one
    absorbing hit state at index ``threshold``.

    The hit state lumps every move to a level at or past the
    threshold together with the jump to infinity; reaching it is
    exactly the event that the line reaches the threshold, so heavy
    row tails cost nothing.  Each row comes from one cumulative-rate
    vector: consecutive differences are the finite target rates, the
    last value is the lump mass, and the first is the exit rate.
    """
    validate(model)
    if threshold < 2:
        raise ValueError(f"need threshold >= 2, got {threshold}")
    hit = threshold
    row_ptr = [0, 0]
    col: list = []
    cum: list = []
    exit_rate = [0.0]
    for level in range(1, threshold):
        ms = np.arange(level + 1, threshold + 1)
        cdf = cum_block_rate_large(model, level, ms)
        total = float(cdf[0])
        exit_rate.append(total)
        if total > 0.0:
            masses = np.empty(ms.size)
            masses[:-1] = cdf[:-1] - cdf[1:]
            masses[-1] = cdf[-1]
            targets = np.append(np.arange(level + 1, threshold), hit)
            nz = np.nonzero(masses > 0.0)[0]
            c = np.cumsum(masses[nz]) / float(masses[nz].sum())
            c[-1] = 1.0
            col.extend(targets[nz].tolist())
            cum.extend(c.tolist())
        row_ptr.append(len(col))
    row_ptr.append(len(col))
    exit_rate.append(0.0)
    return PackedChain(np.array(row_ptr, dtype=np.int64),
                       np.array(col, dtype=np.int64),
                       np.array(cum), np.array(exit_rate))


# ---------------------------------------------------------------------------
# sample paths


@dataclass(frozen=True)
class SamplePath:
    """One trajectory: jump times paired with states, plus the horizon.

    ``times[0]`` is 0.0 and carries the initial state; later entries
    are jump instants.  States move strictly in one direction; a
    rising path may end in the infinite state.  Paths stop at
    absorption or at the last jump inside the horizon, so every
    recorded time lies within it.
    """

    times: tuple
    states: tuple
    horizon: float

    def __post_init__(self):
        times, states = self.times, self.states
        if len(times) != len(states) or not times:
            raise ValueError("times and states must align and be nonempty")
        if times[0] != 0.0:
            raise ValueError("paths start at time zero")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("jump times must increase strictly")
        if times[-1] > self.horizon:
            raise ValueError("recorded times exceed the horizon")
        vals = [float(s) for s in states]
        diffs = [b - a for a, b in zip(vals, vals[1:])]
        if diffs and not (all(d > 0 for d in diffs)
                          or all(d < 0 for d in diffs)):
            raise ValueError("states must be strictly monotone")
        if any(s == INF_STATE for s in states[:-1]):
            raise ValueError("infinite state must be terminal")

    @property
    def n_jumps(self) -> int:
        return len(self.times) - 1

    @property
    def final_state(self):
        return self.states[-1]

    def state_at(self, t: float):
        """State occupied at time t within the horizon."""
        if t < 0 or t > self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        return self.states[bisect.bisect_right(self.times, t) - 1]


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _exp_holding(rng, rate: float) -> float:
    """Exponential holding time by inverse transform, never zero."""
    while True:
        u = 1.0 - rng.random()
        dt = -math.log(u) / rate
        if dt > 0.0:
            return dt


def simulate_block_count(model: CoalescentModel, n: int,
                         horizon: float = math.inf,
                         rng=None) -> SamplePath:
    """One falling-chain trajectory from n blocks.

    Holding times are exponential at the total row rate and targets
    follow the jump chain; the path stops at absorption in state 1 or
    at the horizon.  ``rng`` is a seed or a numpy Generator.
    """
    validate(model)
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if not horizon >= 0:
        raise ValueError(f"need horizon >= 0, got {horizon}")
    rng = _as_rng(rng)
    if n == 1:
        return SamplePath((0.0,), (1,), horizon)
    chain = build_falling_chain(model, n)
    times, states = [0.0], [n]
    state = n
    t = 0.0
    comp = 0.0
    while True:
        rate = float(chain.exit_rate[state])
        if rate <= 0.0:
            break
        dt = _exp_holding(rng, rate)
        y = dt - comp
        t_next = t + y
        comp = (t_next - t) - y
        if t_next > horizon:
            break
        t = t_next
        lo, hi = int(chain.row_ptr[state]), int(chain.row_ptr[state + 1])
        u = rng.random()
        idx = lo + int(np.searchsorted(chain.cum[lo:hi], u, side="left"))
        idx = min(idx, hi - 1)
        state = int(chain.col[idx])
        times.append(t)
        states.append(state)
    return SamplePath(tuple(times), tuple(states), horizon)


@lru_cache(maxsize=4096)
def _cum_row_chunk(model: CoalescentModel, level: int,
                   terms: int) -> np.ndarray:
    """Cumulative rates q(m, <= level) for m = level+2 .. level+1+terms.

    Cached per (model, level, terms); callers double ``terms`` until
    the needed residual is covered, so at most a few sizes exist per
    level.  The returned array is frozen.
    """
    ms = np.arange(level + 2, level + 2 + terms, dtype=np.int64)
    out = cum_block_rate_large(model, level, ms)
    out.setflags(write=False)
    return out


_BISECT_FAMILIES = (Kingman, Dirichlet, DiracNu, LambdaAtoms)


def _line_jump_target(model: CoalescentModel, level: int, resid: float,
                      max_terms: int) -> int:
    """Smallest j > level with q(j+1, <= level) <= resid.

    This inverts the cumulative row of the rising chain: the rate of
    jumping to a target at most j is the exit rate minus
    q(j+1, <= level).  Families with closed cumulative laws bisect on
    single evaluations; the others scan materialized chunks and fail
    once the term cap is reached.
    """
    def past(j: int) -> bool:
        return float(cum_block_rate_large(
            model, level, [j + 1])[0]) <= resid

    if isinstance(model, _BISECT_FAMILIES):
        if past(level + 1):
            return level + 1
        lo, hi, step = level + 1, level + 2, 2
        while not past(hi):
            lo = hi
            hi += step
            step *= 2
            if hi - level > max_terms:
                raise RowSamplingError(
                    f"rising row at level {level} not resolved within "
                    f"{max_terms} terms")
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if past(mid):
                hi = mid
            else:
                lo = mid
        return hi
    terms = 64
    while True:
        vals = _cum_row_chunk(model, level, terms)
        hits = np.nonzero(vals <= resid)[0]
        if hits.size:
            # vals[idx] = q(level+2+idx, <= level), so the smallest
            # admissible target is level+1+idx
            return level + 1 + int(hits[0])
        if terms >= max_terms:
            raise RowSamplingError(
                f"rising row at level {level} not resolved within "
                f"{terms} terms")
        terms = min(2 * terms, max_terms)


def simulate_fixation_line(model: CoalescentModel, n: int, horizon: float,
                           rng=None, max_terms: int = 100_000,
                           level_cap: int = 1_000_000) -> SamplePath:
    """One rising-chain trajectory from level n up to the horizon.

    Each jump draws a single uniform: the top slice of the row is the
    exact mass of the jump to infinity, and finite targets come from
    inverting the cumulative row.  A row whose needed tail cannot be
    resolved within ``max_terms`` raises :class:`RowSamplingError`
    rather than faking a jump to infinity, which matters for measures
    whose line never explodes.

    A line that explodes accumulates infinitely many finite jumps
    before a finite time, so a path cannot be followed level by level
    past the blow-up.  Once the level passes ``level_cap``, a model
    whose line is known to explode closes the path with the infinite
    state at the current jump time; the unrecorded remainder of the
    blow-up time is the tail sum of inverse rates past the cap,
    negligible at the default height.  For any other model the cap
    raises :class:`RowSamplingError`.
    """
    validate(model)
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if not (horizon >= 0 and math.isfinite(horizon)):
        raise ValueError(f"need a finite horizon >= 0, got {horizon}")
    if level_cap < n:
        raise ValueError(f"need level_cap >= n, got {level_cap} < {n}")
    explodes = dust_classification(model).fixation_line_explodes is True
    rng = _as_rng(rng)
    times, states = [0.0], [n]
    level = n
    t = 0.0
    comp = 0.0
    while True:
        gamma = total_rate_large(model, level)
        if gamma <= 0.0:
            break
        dt = _exp_holding(rng, gamma)
        y = dt - comp
        t_next = t + y
        comp = (t_next - t) - y
        if t_next > horizon:
            break
        if t_next <= t:
            # Holding times shrank below the clock's resolution, which
            # only happens on the way up a blow-up.
            if explodes:
                times.append(math.nextafter(t, math.inf))
                states.append(INF_STATE)
                break
            raise RowSamplingError(
                f"holding times at level {level} fall below time "
                f"resolution without a known blow-up")
        t = t_next
        cov = float(coverage_mass(model, level))
        v = rng.random()
        if v * gamma >= gamma - cov:
            times.append(t)
            states.append(INF_STATE)
            break
        level = _line_jump_target(model, level, gamma * (1.0 - v),
                                  max_terms)
        if level > level_cap:
            if explodes:
                times.append(t)
                states.append(INF_STATE)
                break
            raise RowSamplingError(
                f"level cap {level_cap} exceeded on a line not known "
                f"to explode")
        times.append(t)
        states.append(level)
    return SamplePath(tuple(times), tuple(states), horizon)


# ---------------------------------------------------------------------------
# experiment reports


@dataclass(frozen=True)
class ExperimentRow:
    """One estimated quantity, optionally with a reference value."""

    name: str
    estimate: float
    stderr: Optional[float] = None
    reference: Optional[float] = None
    abs_tol: Optional[float] = None
    provenance: str = ""

    def consistent(self, sigma: float) -> Optional[bool]:
        """Whether the estimate matches its reference.

        The allowance is ``abs_tol + sigma * stderr`` over whichever
        parts are present: a tolerance budgets deterministic bias (a
        reference that is only a limit), the stderr part budgets Monte
        Carlo noise.  None when the row carries no decision: no
        reference, or a reference with neither part.
        """
        if self.reference is None:
            return None
        if self.stderr is None and self.abs_tol is None:
            return None
        allow = (self.abs_tol or 0.0) + (sigma * self.stderr
                                         if self.stderr is not None else 0.0)
        return abs(self.estimate - self.reference) <= allow

    def to_dict(self, sigma: Optional[float] = None) -> dict:
        out = {"name": self.name, "estimate": self.estimate,
               "stderr": self.stderr, "reference": self.reference,
               "abs_tol": self.abs_tol, "provenance": self.provenance}
        if sigma is not None:
            out["consistent"] = self.consistent(sigma)
        return out


@dataclass(frozen=True)
class ExperimentReport:
    """Estimates with references and a decision at a sigma multiple."""

    label: str
    rows: tuple
    sigma: float = 4.0
    note: str = ""
    raw: Optional[PathBatch] = field(default=None, repr=False,
                                     compare=False)

    @property
    def passed(self) -> bool:
        """True when no decided row is off by more than sigma errors."""
        return all(row.consistent(self.sigma) is not False
                   for row in self.rows)

    def to_dict(self) -> dict:
        return {"label": self.label, "sigma": self.sigma,
                "note": self.note, "passed": self.passed,
                "rows": [row.to_dict(self.sigma) for row in self.rows]}

    def __str__(self) -> str:
        lines = [f"{self.label}: {'pass' if self.passed else 'FAIL'} "
                 f"at {self.sigma} sigma"]
        for row in self.rows:
            bits = [f"  {row.name}: {row.estimate:.6g}"]
            if row.stderr is not None:
                bits.append(f"+- {row.stderr:.2g}")
            if row.reference is not None:
                bits.append(f"(ref {row.reference:.6g})")
            verdict = row.consistent(self.sigma)
            if verdict is not None:
                bits.append("ok" if verdict else "OFF")
            lines.append(" ".join(bits))
        if self.note:
            lines.append(f"  note: {self.note}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Monte Carlo experiments


def _proportion(count: int, reps: int):
    p = count / reps
    return p, math.sqrt(p * (1.0 - p) / reps)


def mc_duality_test(model: CoalescentModel, i: int, j: int, t: float,
                    reps: int = 100_000, seed: int = 0,
                    sigma: float = 4.0, threads: int = 1) -> ExperimentReport:
    """Compare P(falling chain from i sits at or below j at time t)
    against P(rising chain from j has reached i by t), by independent
    simulation of both sides.

    The two probabilities agree in law; the decision applies a pooled
    two-proportion z-test at the given sigma multiple.
    """
    validate(model)
    if i < 1 or j < 1:
        raise ValueError(f"need i, j >= 1, got i={i}, j={j}")
    if not t > 0:
        raise ValueError(f"need t > 0, got {t}")
    label = f"duality i={i} j={j} t={t} [{type(model).__name__}]"
    if j >= i:
        rows = (
            ExperimentRow("P(block count <= j)", 1.0, 0.0, None,
                          provenance="monotone paths"),
            ExperimentRow("P(line >= i)", 1.0, 0.0, None,
                          provenance="monotone paths"),
            ExperimentRow("difference", 0.0, 0.0, 0.0,
                          provenance="both certain"),
        )
        return ExperimentReport(label, rows, sigma,
                                note="trivial: start already past the "
                                     "comparison point")
    ss = np.random.SeedSequence(seed)
    child_n, child_l = ss.spawn(2)
    falling = build_falling_chain(model, i)
    batch_n = run_paths(falling, np.full(reps, i, dtype=np.int64), t,
                        path_seeds(child_n, reps), threads=threads)
    hits_n = int(np.count_nonzero(batch_n.states <= j))
    rising = build_rising_chain(model, i)
    batch_l = run_paths(rising, np.full(reps, j, dtype=np.int64), t,
                        path_seeds(child_l, reps), threads=threads)
    hits_l = int(np.count_nonzero(batch_l.states == i))
    p_n, se_n = _proportion(hits_n, reps)
    p_l, se_l = _proportion(hits_l, reps)
    pooled = (hits_n + hits_l) / (2.0 * reps)
    se_diff = math.sqrt(2.0 * pooled * (1.0 - pooled) / reps)
    rows = (
        ExperimentRow("P(block count <= j)", p_n, se_n, None,
                      provenance=f"{reps} falling paths"),
        ExperimentRow("P(line >= i)", p_l, se_l, None,
                      provenance=f"{reps} rising paths"),
        ExperimentRow("difference", p_n - p_l, se_diff, 0.0,
                      provenance="pooled two-proportion z"),
    )
    return ExperimentReport(label, rows, sigma,
                            note=f"{reps} replicates per side")


def _falling_first_step_moments(chain: PackedChain):
    """Expected jump count and absorption time per start state.

    Backward first-step recursion over the packed rows; valid because
    falling targets always sit below their source state.
    """
    n = chain.n_states
    e_jumps = np.zeros(n)
    e_time = np.zeros(n)
    for s in range(n):
        rate = float(chain.exit_rate[s])
        if rate <= 0.0:
            continue
        lo, hi = int(chain.row_ptr[s]), int(chain.row_ptr[s + 1])
        probs = np.diff(chain.cum[lo:hi], prepend=0.0)
        targets = chain.col[lo:hi]
        if targets.size and int(targets.max()) >= s:
            raise ValueError("first-step recursion needs a falling chain")
        e_jumps[s] = 1.0 + float(probs @ e_jumps[targets])
        e_time[s] = 1.0 / rate + float(probs @ e_time[targets])
    return e_jumps, e_time


def jumps_and_absorption(model: CoalescentModel, n: int,
                         reps: int = 20_000, seed: int = 0,
                         sigma: float = 4.0,
                         threads: int = 1) -> ExperimentReport:
    """Empirical jump count and absorption time of the falling chain.

    References come from the first-step recursion over the same rate
    rows, so the report doubles as a consistency check between the
    path kernel and exact dynamic programming.  For the finite-box
    family an extra row compares the empirical jump-count law with
    the large-n limit law.  The raw batch rides along as ``raw``.
    """
    validate(model)
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    chain = build_falling_chain(model, n)
    batch = run_paths(chain, np.full(reps, n, dtype=np.int64), math.inf,
                      path_seeds(seed, reps), threads=threads)
    jumps = batch.jumps.astype(np.float64)
    times = batch.absorb_times
    e_jumps, e_time = _falling_first_step_moments(chain)
    rows = [
        ExperimentRow("mean jump count", float(jumps.mean()),
                      float(jumps.std(ddof=1) / math.sqrt(reps)),
                      float(e_jumps[n]),
                      provenance="first-step recursion on the same rows"),
        ExperimentRow("mean absorption time", float(times.mean()),
                      float(times.std(ddof=1) / math.sqrt(reps)),
                      float(e_time[n]),
                      provenance="first-step recursion on the same rows"),
    ]
    note = f"{reps} paths from {n} blocks, all absorbed"
    if isinstance(model, Dirichlet) and is_exact_model(model):
        laws = dirichlet_limit_laws(model.N, model.alpha)
        limit = np.array([float(p) for p in laws.jump_pmf_limit])
        counts = np.bincount(batch.jumps, minlength=limit.size)
        emp = counts / reps
        width = max(limit.size, emp.size)
        tv = 0.5 * float(np.abs(
            np.pad(emp, (0, width - emp.size))
            - np.pad(limit, (0, width - limit.size))).sum())
        rows.append(ExperimentRow(
            "TV(jump count, limit law)", tv, None,
            float(laws.tv_to_limit(n)),
            provenance="exact dynamic programming reference"))
        note += "; limit-law reference is exact"
    return ExperimentReport(f"jumps and absorption from n={n} "
                            f"[{type(model).__name__}]",
                            tuple(rows), sigma, note, raw=batch)


# ---------------------------------------------------------------------------
# finite-box limit laws


class DirichletLimitLaws:
    """Exact jump-count and absorption-time laws for the finite-box
    falling chain, with their large-n limits.

    From any start above the box count the first move lands inside
    {1..N} at total rate one, so the limit jump count is one plus the
    count from N, and the limit absorption time adds a standard
    exponential holding to the time from N.  Everything is rational.
    """

    def __init__(self, N: int, alpha):
        model = Dirichlet(N, alpha)
        validate(model)
        if not is_exact_model(model):
            raise ValueError("limit laws need an exact rational alpha")
        self.model = model
        self.N = N
        self._pmf = {1: (Fraction(1),)}
        self._tau = {1: Fraction(0)}
        for m in range(2, N + 1):
            pmf_m, tau_m = self._one_state(m)
            self._pmf[m] = pmf_m
            self._tau[m] = tau_m
        shifted = (Fraction(0),) + self._pmf[N]
        self.jump_pmf_limit = _pad(shifted, N + 1)
        self.expected_absorption_limit = 1 + self._tau[N]
        self.expected_jumps_limit = sum(
            k * p for k, p in enumerate(self.jump_pmf_limit))

    def _one_state(self, m: int):
        probs = crp_distribution(self.model, m, exact=True)
        stay = probs[m] if m <= self.N else Fraction(0)
        q_m = 1 - stay
        pmf = [Fraction(0)] * (m + 1)
        tau = Fraction(1) / q_m
        for j in range(1, m):
            r = probs[j] / q_m
            if r == 0:
                continue
            for k, p in enumerate(self._pmf[j]):
                pmf[k + 1] += r * p
            tau += r * self._tau[j]
        return tuple(pmf), tau

    def _start_row(self, n: int):
        """Exact first-move law from n blocks (total rate one past N)."""
        probs = crp_distribution(self.model, n, exact=True)
        stay = probs[n] if n <= self.N else Fraction(0)
        return probs, 1 - stay

    def jump_pmf(self, n: int) -> tuple:
        """Exact law of the number of jumps from n blocks."""
        if n < 1:
            raise ValueError(f"need n >= 1, got {n}")
        if n <= self.N:
            return _pad(self._pmf[n], self.N + 1)
        probs, q_n = self._start_row(n)
        pmf = [Fraction(0)] * (self.N + 1)
        for j in range(1, self.N + 1):
            r = probs[j] / q_n
            if r == 0:
                continue
            for k, p in enumerate(self._pmf[j]):
                if p != 0:
                    pmf[k + 1] += r * p
        return tuple(pmf)

    def absorption_mean(self, n: int) -> Fraction:
        """Exact expected absorption time from n blocks."""
        if n < 1:
            raise ValueError(f"need n >= 1, got {n}")
        if n <= self.N:
            return self._tau[n]
        probs, q_n = self._start_row(n)
        return Fraction(1) / q_n + sum(
            probs[j] / q_n * self._tau[j] for j in range(1, self.N + 1))

    def tv_to_limit(self, n: int) -> Fraction:
        """Exact total-variation distance between the jump-count law
        from n blocks and its limit."""
        pmf = self.jump_pmf(n)
        return sum(abs(a - b) for a, b
                   in zip(pmf, self.jump_pmf_limit)) / 2


def _pad(pmf, width: int) -> tuple:
    out = list(pmf) + [Fraction(0)] * (width - len(pmf))
    return tuple(out[:width])


def dirichlet_limit_laws(N: int, alpha) -> DirichletLimitLaws:
    """Exact limit laws of the finite-box falling chain."""
    return DirichletLimitLaws(N, alpha)


# ---------------------------------------------------------------------------
# dust-limit experiment


def _poisson_tail(threshold: int, mean: float) -> float:
    """P(Poisson(mean) >= threshold)."""
    if threshold <= 0:
        return 1.0
    return float(1.0 - gammaincc(float(threshold), mean))


def _scaled_line_reference(model: CoalescentModel, t: float,
                           y: float) -> Optional[float]:
    """Limit of P(n / line level <= y) where it has a closed form.

    The limit variable multiplies one dust factor per event of a
    Poisson clock, so the probability is a Poisson tail whenever a
    single dust value is in play; seating families keep no dust
    inside events and reduce to the single-event case.
    """
    if y >= 1.0:
        return 1.0
    if isinstance(model, SEATING_FAMILIES):
        return 1.0 - math.exp(-t)
    if isinstance(model, DiracNu):
        dust = float(model.point.dust)
        w = float(model.weight)
        if dust <= 0.0:
            return 1.0 - math.exp(-w * t)
        need = math.ceil(math.log(y) / math.log(dust))
        return _poisson_tail(max(need, 1), w * t)
    if isinstance(model, LambdaAtoms) and len(model.atoms) == 1 \
            and not model.kingman_mass:
        x, wt = model.atoms[0]
        xf = float(x)
        rate = float(wt) / xf ** 2
        if xf >= 1.0:
            return 1.0 - math.exp(-rate * t)
        need = math.ceil(math.log(y) / math.log1p(-xf))
        return _poisson_tail(max(need, 1), rate * t)
    return None


def dust_convergence_experiment(model: CoalescentModel,
                                n_list=(100, 500, 2000), t: float = 0.5,
                                moments=(1, 2), reps: int = 20_000,
                                seed: int = 0, sigma: float = 4.0,
                                threads: int = 1, y_grid=(),
                                bias_tol: float = 0.05) -> ExperimentReport:
    """Scaled block-count moments against the dust-limit law.

    For each n the falling chain runs to the horizon and the moments
    of (block count)/n are compared with exp(-t * phi(k)), where phi
    is the dust decay exponent of the measure.  Models without dust
    have no limit law and are rejected.  Optional ``y_grid`` entries
    add P(n / line level <= y) rows estimated with the lumped rising
    chain at the largest n.

    Every reference here is a limit in n, so each row budgets
    ``bias_tol`` of deterministic finite-size bias on top of the
    Monte Carlo allowance.  Measures with heavy small-part mass
    converge slowly and may need a larger budget or larger n.
    """
    validate(model)
    if not t >= 0:
        raise ValueError(f"need t >= 0, got {t}")
    if not n_list:
        raise ValueError("need at least one population size")
    moments = tuple(moments)
    if any(k < 1 for k in moments):
        raise ValueError("moment orders must be >= 1")
    phi = {k: laplace_exponent(model, k) for k in moments}
    quadrature = isinstance(model, BetaLambda)
    sizes = sorted(set(int(n) for n in n_list))
    if sizes[0] < 2:
        raise ValueError("population sizes must be >= 2")
    n_max = sizes[-1]
    y_grid = tuple(y_grid)
    chain = build_falling_chain(model, n_max)
    children = np.random.SeedSequence(seed).spawn(len(sizes) + len(y_grid))
    rows = []
    errors = {k: [] for k in moments}
    for idx, n in enumerate(sizes):
        batch = run_paths(chain, np.full(reps, n, dtype=np.int64), t,
                          path_seeds(children[idx], reps),
                          threads=threads)
        frac = batch.states / n
        for k in moments:
            vals = frac ** k
            est = float(vals.mean())
            se = float(vals.std(ddof=1) / math.sqrt(reps))
            ref = math.exp(-t * phi[k])
            errors[k].append(abs(est - ref))
            rows.append(ExperimentRow(
                f"E (N/n)^{k} at n={n}", est, se, ref, bias_tol,
                provenance="numerical quadrature for the decay exponent"
                if quadrature else "exponential dust decay"))
    for pos, y in enumerate(y_grid):
        yf = float(y)
        if not yf > 0.0:
            raise ValueError(f"grid values must be positive, got {y}")
        ref = _scaled_line_reference(model, t, yf)
        if yf >= 1.0:
            rows.append(ExperimentRow(
                f"P(n/L <= {yf}) at n={n_max}", 1.0, 0.0, ref,
                provenance="line paths never fall below their start"))
            continue
        threshold = max(n_max + 1, math.ceil(n_max / yf))
        rising = build_rising_chain(model, threshold)
        batch = run_paths(rising, np.full(reps, n_max, dtype=np.int64),
                          t, path_seeds(children[len(sizes) + pos], reps),
                          threads=threads)
        est, se = _proportion(
            int(np.count_nonzero(batch.states == threshold)), reps)
        rows.append(ExperimentRow(
            f"P(n/L <= {yf}) at n={n_max}", est, se, ref, bias_tol,
            provenance="lumped rising chain"
            + ("" if ref is not None else "; no closed reference")))
    decay = "; ".join(
        f"moment {k}: errors {', '.join(f'{e:.2e}' for e in errors[k])}"
        for k in moments)
    note = f"error decay over n = {sizes}: {decay}"
    if quadrature:
        note += "; decay exponent from quadrature, not closed form"
    return ExperimentReport(
        f"dust limit at t={t} [{type(model).__name__}]",
        tuple(rows), sigma, note)
