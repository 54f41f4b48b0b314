"""Compare the compiled and pure-python path kernels.

Run as: python3 benchmarks/bench_kernels.py [npaths]
"""

import sys
import time

import numpy as np

from coaldual import _pathkern_py
from coaldual.kernels import PackedChain, path_seeds

try:
    from coaldual import _pathkern
except ImportError:
    _pathkern = None


def kingman_falling(n):
    row_ptr = [0, 0, 0]
    col, cum = [], []
    for i in range(2, n + 1):
        col.append(i - 1)
        cum.append(1.0)
        row_ptr.append(len(col))
    rate = [0.0, 0.0] + [i * (i - 1) / 2.0 for i in range(2, n + 1)]
    return PackedChain(np.array(row_ptr), np.array(col), np.array(cum),
                       np.array(rate))


def bench(impl, chain, init, seeds, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        impl.run_paths(chain.row_ptr, chain.col, chain.cum,
                       chain.exit_rate, init, float("inf"), seeds,
                       10 * chain.n_states)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    npaths = int(sys.argv[1]) if len(sys.argv) > 1 else 200_000
    n = 100
    chain = kingman_falling(n)
    init = np.full(npaths, n, dtype=np.int64)
    seeds = path_seeds(12, npaths)
    jumps_total = npaths * (n - 1)

    t_py = bench(_pathkern_py, chain, init, seeds)
    print(f"python   backend: {t_py:8.3f} s "
          f"({jumps_total / t_py / 1e6:7.1f} M jumps/s)")
    if _pathkern is None:
        print("compiled backend: not built")
        return
    t_c = bench(_pathkern, chain, init, seeds)
    print(f"compiled backend: {t_c:8.3f} s "
          f"({jumps_total / t_c / 1e6:7.1f} M jumps/s)")
    print(f"speedup: {t_py / t_c:.1f}x")


if __name__ == "__main__":
    main()
