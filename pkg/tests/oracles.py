"""Brute-force reference implementations used only by the test suite.

Everything here is deliberately naive: direct enumeration or first
principles dynamic programming, written independently of the library
code so that agreement is meaningful.
"""

import itertools
import math
from fractions import Fraction


def set_partition_count(i, j):
    """Number of partitions of {1..i} into j nonempty blocks, by enumeration.

    Walks restricted growth strings.  Exponential, keep i small.
    """
    if i == 0:
        return 1 if j == 0 else 0

    count = 0

    def extend(prefix, max_label):
        nonlocal count
        if len(prefix) == i:
            if max_label + 1 == j:
                count += 1
            return
        for lab in range(max_label + 2):
            extend(prefix + [lab], max(max_label, lab))

    extend([0], 0)
    return count


def cycle_count(i, j):
    """Number of permutations of i elements with exactly j cycles."""
    if i == 0:
        return 1 if j == 0 else 0
    count = 0
    for perm in itertools.permutations(range(i)):
        seen = [False] * i
        cycles = 0
        for start in range(i):
            if not seen[start]:
                cycles += 1
                k = start
                while not seen[k]:
                    seen[k] = True
                    k = perm[k]
        if cycles == j:
            count += 1
    return count


def lah_number(i, j):
    """Closed form i!/j! * C(i-1, j-1)."""
    if j < 1 or j > i:
        return 1 if i == j == 0 else 0
    return math.factorial(i) // math.factorial(j) * math.comb(i - 1, j - 1)


def occupancy_prob_dp(i, parts, dust, j):
    """P(#dust balls + #occupied boxes == j) for i iid balls.

    Balls land in box m >= 1 with probability parts[m-1] and in the
    dust box 0 with probability dust.  Dynamic programming over boxes
    with state (balls used, boxes occupied); exact when inputs are
    Fractions.  Independent of the composition-enumeration route.
    """
    one = Fraction(1) if isinstance(dust, Fraction) or (
        parts and isinstance(parts[0], Fraction)) else 1.0
    m = len(parts)
    # f[u][k]: sum over allocations of u labelled balls to boxes 1..t
    # occupying exactly k of them, of prod parts^counts / counts!
    f = [[one if (u, k) == (0, 0) else 0 * one for k in range(m + 1)]
         for u in range(i + 1)]
    for t in range(1, m + 1):
        p = parts[t - 1]
        g = [[0 * one for _ in range(m + 1)] for _ in range(i + 1)]
        pw = [one]
        for v in range(1, i + 1):
            pw.append(pw[-1] * p)
        for u in range(i + 1):
            for k in range(m + 1):
                base = f[u][k]
                if base == 0:
                    continue
                g[u][k] += base  # box t empty
                for v in range(1, i - u + 1):
                    if k + 1 <= m:
                        g[u + v][k + 1] += base * pw[v] / math.factorial(v)
        f = g
    # P(Y = j) = sum_k i! * dust^(j-k)/(j-k)! * f[i-(j-k)][k], where the
    # f factor already carries the 1/c! weights of the occupied boxes.
    total = 0 * one
    fact_i = math.factorial(i)
    for k in range(min(j, m) + 1):
        d = j - k
        if d < 0 or d > i:
            continue
        val = f[i - d][k]
        if val == 0:
            continue
        total += fact_i * val * (dust ** d) / math.factorial(d)
    return total


def occupancy_prob_enum(i, parts, dust, j):
    """Same probability by full m^i enumeration of labelled allocations."""
    m = len(parts)
    probs = [dust] + list(parts)
    total = 0 * (Fraction(1) if isinstance(dust, Fraction) else 1.0)
    for alloc in itertools.product(range(m + 1), repeat=i):
        y = sum(1 for a in alloc if a == 0) + len({a for a in alloc if a > 0})
        if y == j:
            p = 1
            for a in alloc:
                p = p * probs[a]
            total += p
    return total


def occupancy_step_prob_enum(j_balls, parts, dust, i_target):
    """P(Y(j) = i and Y(j+1) = i+1) by enumeration over j+1 balls."""
    m = len(parts)
    probs = [dust] + list(parts)
    total = 0 * (Fraction(1) if isinstance(dust, Fraction) else 1.0)
    for alloc in itertools.product(range(m + 1), repeat=j_balls + 1):
        head = alloc[:j_balls]
        y1 = sum(1 for a in head if a == 0) + len({a for a in head if a > 0})
        y2 = sum(1 for a in alloc if a == 0) + len({a for a in alloc if a > 0})
        if y1 == i_target and y2 == i_target + 1:
            p = 1
            for a in alloc:
                p = p * probs[a]
            total += p
    return total


def crp_table_count_probs(i, new_table_prob):
    """Distribution of the number of occupied tables after i arrivals.

    ``new_table_prob(k, n)`` gives the probability that arrival n+1
    opens table k+1 given k tables are occupied after n arrivals.
    Plain forward recursion on probabilities.
    """
    dist = {1: 1} if i >= 1 else {0: 1}
    for n in range(1, i):
        nxt = {}
        for k, p in dist.items():
            pn = new_table_prob(k, n)
            nxt[k + 1] = nxt.get(k + 1, 0) + p * pn
            nxt[k] = nxt.get(k, 0) + p * (1 - pn)
        dist = nxt
    return dist
