"""Path kernel backends: stream parity, stepping semantics, batching."""

import math

import numpy as np
import pytest

from coaldual import _pathkern_py
from coaldual.kernels import (
    PackedChain,
    backend_name,
    path_seeds,
    run_paths,
    uniform_stream,
)

try:
    from coaldual import _pathkern
except ImportError:
    _pathkern = None

needs_compiled = pytest.mark.skipif(_pathkern is None,
                                    reason="compiled kernel not built")


def kingman_falling(n):
    """Index = block count; states 0 and 1 absorbing."""
    row_ptr = [0, 0, 0]
    col, cum = [], []
    for i in range(2, n + 1):
        col.append(i - 1)
        cum.append(1.0)
        row_ptr.append(len(col))
    rate = [0.0, 0.0] + [i * (i - 1) / 2.0 for i in range(2, n + 1)]
    return PackedChain(np.array(row_ptr), np.array(col), np.array(cum),
                       np.array(rate))


def lazy_uniform_chain():
    """Two transient states feeding two absorbing ones, split 0.3/0.7."""
    row_ptr = np.array([0, 0, 0, 2, 4])
    col = np.array([0, 1, 0, 1])
    cum = np.array([0.3, 1.0, 0.7, 1.0])
    rate = np.array([0.0, 0.0, 2.0, 0.5])
    return PackedChain(row_ptr, col, cum, rate)


class TestUniformStream:
    def test_backends_emit_identical_streams(self):
        for seed in (0, 1, 12345, 2**64 - 1):
            a = _pathkern_py.uniform_stream(seed, 64)
            assert np.all((a > 0) & (a < 1))
            if _pathkern is not None:
                b = _pathkern.uniform_stream(seed, 64)
                assert np.array_equal(a, b)

    def test_stream_statistics(self):
        u = _pathkern_py.uniform_stream(42, 20000)
        assert abs(u.mean() - 0.5) < 0.01
        assert abs(np.corrcoef(u[:-1], u[1:])[0, 1]) < 0.03

    def test_distinct_seeds_distinct_streams(self):
        assert not np.array_equal(uniform_stream(1, 8), uniform_stream(2, 8))


class TestPackedChain:
    def test_validation(self):
        with pytest.raises(ValueError, match="inconsistent"):
            PackedChain(np.array([0, 1]), np.array([0, 0]),
                        np.array([0.5, 1.0]), np.array([1.0]))
        with pytest.raises(ValueError, match="empty row"):
            PackedChain(np.array([0, 0]), np.array([], dtype=int),
                        np.array([]), np.array([1.0]))
        with pytest.raises(ValueError, match="end at 1"):
            PackedChain(np.array([0, 1]), np.array([0]),
                        np.array([0.9]), np.array([0.0]))
        with pytest.raises(ValueError, match="out of range"):
            PackedChain(np.array([0, 1]), np.array([3]),
                        np.array([1.0]), np.array([1.0]))

    def test_n_states(self):
        assert kingman_falling(6).n_states == 7


class TestRunPaths:
    def test_absorption_counts_and_times(self):
        ch = kingman_falling(5)
        seeds = path_seeds(777, 20000)
        batch = run_paths(ch, np.full(20000, 5), np.inf, seeds)
        assert np.all(batch.states == 1)
        assert np.all(batch.jumps == 4)
        expect = sum(2.0 / (i * (i - 1)) for i in range(2, 6))
        se = 0.02
        assert abs(batch.absorb_times.mean() - expect) < 4 * se

    def test_zero_horizon_freezes_paths(self):
        ch = kingman_falling(5)
        batch = run_paths(ch, np.full(50, 5), 0.0, path_seeds(3, 50))
        assert np.all(batch.states == 5)
        assert np.all(batch.jumps == 0)
        assert np.all(np.isinf(batch.absorb_times))

    def test_absorbing_start(self):
        ch = kingman_falling(5)
        batch = run_paths(ch, np.ones(10, dtype=int), 1.0, path_seeds(4, 10))
        assert np.all(batch.states == 1)
        assert np.all(batch.absorb_times == 0.0)

    def test_split_targets_hit_expected_frequencies(self):
        ch = lazy_uniform_chain()
        npaths = 40000
        batch = run_paths(ch, np.full(npaths, 2), np.inf,
                          path_seeds(99, npaths))
        frac = np.mean(batch.states == 0)
        assert abs(frac - 0.3) < 4 * math.sqrt(0.3 * 0.7 / npaths)

    def test_threads_do_not_change_results(self):
        ch = kingman_falling(12)
        seeds = path_seeds(5, 7001)
        init = np.full(7001, 12)
        one = run_paths(ch, init, 0.8, seeds, threads=1)
        four = run_paths(ch, init, 0.8, seeds, threads=4)
        assert np.array_equal(one.states, four.states)
        assert np.array_equal(one.jumps, four.jumps)
        assert np.array_equal(one.absorb_times, four.absorb_times)

    def test_jump_cap_raises(self):
        # a two-cycle is not monotone, so the cap must trip
        row_ptr = np.array([0, 1, 2])
        col = np.array([1, 0])
        cum = np.array([1.0, 1.0])
        ch = PackedChain(row_ptr, col, cum, np.array([1.0, 1.0]))
        with pytest.raises(RuntimeError, match="exceeded"):
            run_paths(ch, np.zeros(3, dtype=int), np.inf, path_seeds(6, 3),
                      max_jumps=50)

    def test_input_validation(self):
        ch = kingman_falling(4)
        with pytest.raises(ValueError, match="same length"):
            run_paths(ch, np.array([4, 4]), 1.0, path_seeds(0, 3))
        with pytest.raises(ValueError, match="out of range"):
            run_paths(ch, np.array([9]), 1.0, path_seeds(0, 1))

    @needs_compiled
    def test_backends_agree_exactly(self):
        ch = lazy_uniform_chain()
        seeds = path_seeds(2024, 5000)
        init = np.full(5000, 2)
        for horizon in (np.inf, 0.9):
            got = {}
            for impl in (_pathkern, _pathkern_py):
                got[impl.backend_tag()] = impl.run_paths(
                    ch.row_ptr, ch.col, ch.cum, ch.exit_rate, init,
                    float(horizon), seeds, 1000)
            sc, jc, tc, oc = got["compiled"]
            sp, jp, tp, op = got["python"]
            assert np.array_equal(sc, sp)
            assert np.array_equal(jc, jp)
            assert np.allclose(tc, tp, rtol=1e-12, atol=0,
                               equal_nan=False) or np.array_equal(tc, tp)
            assert np.array_equal(oc, op)

    def test_backend_name_reports(self):
        assert backend_name() in ("compiled", "python")
