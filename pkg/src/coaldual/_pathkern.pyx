# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled path-stepping kernel for packed monotone jump chains.

Steps many independent continuous-time paths through a chain packed in
CSR form (row pointers, target columns, within-row cumulative
probabilities, total exit rates).  Each path carries its own counter
RNG state, so results are reproducible from the seed array alone and
the pure-python backend can replay the identical uniform stream.
"""

from libc.math cimport INFINITY, log

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef unsigned long long u64


cdef inline double _next_uniform(u64 *state) noexcept nogil:
    # splitmix64 step; the +0.5 keeps the value strictly inside (0, 1)
    cdef u64 z
    state[0] = state[0] + <u64>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <u64>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <u64>0x94D049BB133111EB
    z = z ^ (z >> 31)
    return ((z >> 11) + 0.5) * 1.1102230246251565e-16  # 2 ** -53


def backend_tag():
    return "compiled"


def uniform_stream(seed, int count):
    """First ``count`` uniforms of one path stream; for backend tests."""
    cdef u64 s = <u64>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(count, dtype=np.float64)
    cdef int k
    for k in range(count):
        out[k] = _next_uniform(&s)
    return out


def run_paths(cnp.int64_t[::1] row_ptr,
              cnp.int64_t[::1] col,
              cnp.float64_t[::1] cum,
              cnp.float64_t[::1] exit_rate,
              cnp.int64_t[::1] init,
              double horizon,
              cnp.uint64_t[::1] seeds,
              cnp.int64_t max_jumps):
    """Advance every path to absorption or the horizon.

    Returns (states, jumps, absorb_times, overran) arrays; absorb time
    is +inf for a path still unabsorbed at the horizon, and overran
    flags paths that hit ``max_jumps`` (callers should raise).
    """
    cdef Py_ssize_t npaths = init.shape[0]
    if seeds.shape[0] != npaths:
        raise ValueError("one seed per path required")
    states_arr = np.empty(npaths, dtype=np.int64)
    jumps_arr = np.zeros(npaths, dtype=np.int64)
    times_arr = np.full(npaths, np.inf, dtype=np.float64)
    over_arr = np.zeros(npaths, dtype=np.uint8)
    cdef cnp.int64_t[::1] states = states_arr
    cdef cnp.int64_t[::1] jumps = jumps_arr
    cdef cnp.float64_t[::1] times = times_arr
    cdef cnp.uint8_t[::1] over = over_arr

    cdef Py_ssize_t r
    cdef u64 rng
    cdef cnp.int64_t s, nj, lo, hi, mid
    cdef double t, comp, rate, dt, u, y, tt
    with nogil:
        for r in range(npaths):
            rng = seeds[r]
            s = init[r]
            t = 0.0
            comp = 0.0  # Kahan compensation for the clock
            nj = 0
            while True:
                rate = exit_rate[s]
                if rate <= 0.0:
                    times[r] = t
                    break
                dt = -log(_next_uniform(&rng)) / rate
                y = dt - comp
                tt = t + y
                comp = (tt - t) - y
                t = tt
                if t > horizon:
                    break
                u = _next_uniform(&rng)
                lo = row_ptr[s]
                hi = row_ptr[s + 1]
                while lo < hi:
                    mid = (lo + hi) >> 1
                    if cum[mid] < u:
                        lo = mid + 1
                    else:
                        hi = mid
                s = col[lo]
                nj += 1
                if nj >= max_jumps:
                    over[r] = 1
                    break
            states[r] = s
            jumps[r] = nj
    return states_arr, jumps_arr, times_arr, over_arr
