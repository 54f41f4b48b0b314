"""Backend selection and batch driving for the path-stepping kernels.

The compiled kernel is preferred when the extension built; setting the
environment variable ``COALDUAL_PURE_PY`` to a non-empty value before
import forces the numpy implementation.  Both backends consume the
same per-path splitmix64 uniform stream, so state and jump outputs are
reproducible across backends from the seed array alone.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

if os.environ.get("COALDUAL_PURE_PY"):
    from . import _pathkern_py as _impl
else:
    try:
        from . import _pathkern as _impl
    except ImportError:
        from . import _pathkern_py as _impl


def backend_name() -> str:
    """Name of the kernel in use: "compiled" or "python"."""
    return _impl.backend_tag()


def uniform_stream(seed: int, count: int) -> np.ndarray:
    """The first uniforms a path with this seed will consume."""
    return _impl.uniform_stream(seed, count)


@dataclass(frozen=True)
class PackedChain:
    """A finite jump chain in CSR form.

    States are 0-based indices; ``row_ptr``/``col`` give each state's
    jump targets and ``cum`` the within-row cumulative probabilities
    (each nonempty row ends exactly at 1.0).  ``exit_rate`` holds the
    total outflow rate; a state with rate 0 is absorbing.  The mapping
    between indices and model states is the builder's business.
    """

    row_ptr: np.ndarray
    col: np.ndarray
    cum: np.ndarray
    exit_rate: np.ndarray

    def __post_init__(self):
        rp = np.asarray(self.row_ptr, dtype=np.int64)
        cl = np.asarray(self.col, dtype=np.int64)
        cm = np.asarray(self.cum, dtype=np.float64)
        er = np.asarray(self.exit_rate, dtype=np.float64)
        n = er.size
        if rp.size != n + 1 or rp[0] != 0 or rp[-1] != cl.size \
                or cl.size != cm.size:
            raise ValueError("inconsistent CSR arrays")
        if np.any(np.diff(rp) < 0):
            raise ValueError("row pointers must be nondecreasing")
        counts = np.diff(rp)
        if np.any((er > 0) & (counts == 0)):
            raise ValueError("positive-rate state with an empty row")
        ends = rp[1:][counts > 0] - 1
        if ends.size and not np.allclose(cm[ends], 1.0, atol=1e-12):
            raise ValueError("cumulative rows must end at 1")
        if cl.size and (cl.min() < 0 or cl.max() >= n):
            raise ValueError("jump target out of range")
        object.__setattr__(self, "row_ptr", rp)
        object.__setattr__(self, "col", cl)
        object.__setattr__(self, "cum", cm)
        object.__setattr__(self, "exit_rate", er)

    @property
    def n_states(self) -> int:
        return self.exit_rate.size


@dataclass(frozen=True)
class PathBatch:
    """Kernel output for one batch: one entry per path."""

    states: np.ndarray
    jumps: np.ndarray
    absorb_times: np.ndarray


def path_seeds(seed, npaths: int) -> np.ndarray:
    """Independent per-path stream seeds from one entropy source."""
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        ss = np.random.SeedSequence(seed)
    return ss.generate_state(npaths, dtype=np.uint64)


def run_paths(chain: PackedChain, init, horizon: float, seeds,
              threads: int = 1, max_jumps: int | None = None) -> PathBatch:
    """Drive paths from ``init`` states until absorption or ``horizon``.

    ``seeds`` is a uint64 array with one stream seed per path (see
    :func:`path_seeds`).  ``threads`` > 1 splits the batch into chunks;
    with the compiled backend chunks run truly in parallel.
    """
    init = np.ascontiguousarray(init, dtype=np.int64)
    seeds = np.ascontiguousarray(seeds, dtype=np.uint64)
    if init.ndim != 1 or seeds.shape != init.shape:
        raise ValueError("init and seeds must be 1-d and the same length")
    if init.size and (init.min() < 0 or init.max() >= chain.n_states):
        raise ValueError("initial state out of range")
    if max_jumps is None:
        # monotone chains visit each state at most once; the slack
        # only matters for misbuilt inputs
        max_jumps = 4 * chain.n_states + 16
    args = (chain.row_ptr, chain.col, chain.cum, chain.exit_rate)

    def run_slice(lo, hi):
        return _impl.run_paths(*args, init[lo:hi], float(horizon),
                               seeds[lo:hi], max_jumps)

    if threads <= 1 or init.size < 2 * threads:
        states, jumps, times, over = run_slice(0, init.size)
    else:
        bounds = np.linspace(0, init.size, threads + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: run_slice(*b),
                                  zip(bounds[:-1], bounds[1:])))
        states, jumps, times, over = (np.concatenate(p)
                                      for p in zip(*parts))
    if np.any(over):
        raise RuntimeError(
            f"{int(np.sum(over))} paths exceeded {max_jumps} jumps; "
            "the chain is not monotone or max_jumps is too small")
    return PathBatch(states=states, jumps=jumps, absorb_times=times)
