"""Pure-python path-stepping kernel, numpy-vectorized across paths.

Mirrors the compiled kernel exactly: same CSR layout, the same
splitmix64 stream per path, and the same Kahan-compensated clock, so a
given seed array produces the same state and jump sequences on either
backend (clock values may differ in the last few ulps because the two
backends use different log implementations).
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO53_INV = 1.1102230246251565e-16  # 2 ** -53


def backend_tag():
    return "python"


def _advance(state):
    """One splitmix64 step for an array of stream states, in place."""
    state += _GOLDEN
    z = state.copy()
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO53_INV


def uniform_stream(seed, count):
    """First ``count`` uniforms of one path stream; for backend tests."""
    state = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.array([_advance(state)[0] for _ in range(count)])


def run_paths(row_ptr, col, cum, exit_rate, init, horizon, seeds,
              max_jumps):
    """Advance every path to absorption or the horizon.

    Same result contract as the compiled kernel: (states, jumps,
    absorb_times, overran).
    """
    npaths = init.shape[0]
    if seeds.shape[0] != npaths:
        raise ValueError("one seed per path required")
    states = init.astype(np.int64).copy()
    jumps = np.zeros(npaths, dtype=np.int64)
    times = np.full(npaths, np.inf)
    over = np.zeros(npaths, dtype=np.uint8)
    rng = seeds.astype(np.uint64).copy()
    clock = np.zeros(npaths)
    comp = np.zeros(npaths)
    alive = np.arange(npaths)

    while alive.size:
        rate = exit_rate[states[alive]]
        absorbed = rate <= 0.0
        if absorbed.any():
            done = alive[absorbed]
            times[done] = clock[done]
            alive = alive[~absorbed]
            rate = rate[~absorbed]
            if not alive.size:
                break
        sub = rng[alive]
        dt = -np.log(_advance(sub)) / rate
        rng[alive] = sub
        y = dt - comp[alive]
        tt = clock[alive] + y
        comp[alive] = (tt - clock[alive]) - y
        clock[alive] = tt
        running = tt <= horizon
        alive = alive[running]
        if not alive.size:
            break
        sub = rng[alive]
        u = _advance(sub)
        rng[alive] = sub
        cur = states[alive]
        lo = row_ptr[cur]
        hi = row_ptr[cur + 1]
        still = lo < hi
        while np.any(still):
            mid = (lo + hi) >> 1
            right = still & (cum[np.minimum(mid, cum.size - 1)] < u)
            lo = np.where(right, mid + 1, lo)
            hi = np.where(still & ~right, mid, hi)
            still = lo < hi
        states[alive] = col[lo]
        jumps[alive] += 1
        hit_cap = jumps[alive] >= max_jumps
        if hit_cap.any():
            over[alive[hit_cap]] = 1
            alive = alive[~hit_cap]
    return states, jumps, times, over
