"""Seating laws, chain builders, path simulators, experiment harness."""

import math
from fractions import Fraction as F

import numpy as np
import pytest

from coaldual.chains import (
    CrpChainSpec,
    ExperimentReport,
    ExperimentRow,
    RowSamplingError,
    SamplePath,
    build_falling_chain,
    build_rising_chain,
    crp_distribution,
    cum_block_rate_large,
    dirichlet_limit_laws,
    dust_convergence_experiment,
    expected_tables,
    jumps_and_absorption,
    mc_duality_test,
    new_table_prob,
    simulate_block_count,
    simulate_fixation_line,
    total_rate_large,
)
from coaldual.kernels import path_seeds, run_paths
from coaldual.models import (
    BetaLambda,
    DiracNu,
    Dirichlet,
    Kingman,
    LambdaAtoms,
    PoissonDirichlet,
)
from coaldual.paintbox import MassPoint
from coaldual.rates import (
    block_count_rate,
    block_count_total_rate,
    block_cumulative_rate,
    fixation_rate,
    fixation_rate_to_infinity,
)
from coaldual.stirling import rising_factorial

KM = Kingman()
DIR21 = Dirichlet(2, 1)
DIR31 = Dirichlet(3, 1)
PD01 = PoissonDirichlet(0, 1)
PD37 = PoissonDirichlet(F(3, 10), F(7, 10))
DN = DiracNu(MassPoint((F(7, 20), F(1, 4))), 1)
DN0 = DiracNu(MassPoint((F(3, 5), F(2, 5))), 1)
ATOMS = LambdaAtoms(((F(1, 2), F(3, 4)), (F(1, 5), F(1, 2))))
BETA = BetaLambda(F(3, 2), 2)

ALL_MODELS = (KM, DIR21, DIR31, PD01, PD37, DN, DN0, ATOMS, BETA)


class TestSeatingRule:
    def test_first_arrival_always_opens_a_table(self):
        for model in (DIR31, PD01, PD37):
            assert new_table_prob(model, 0, 0, exact=True) == 1

    def test_dirichlet_step(self):
        # (N - k) a / (N a + n) with N=3, a=1
        assert new_table_prob(DIR31, 1, 1, exact=True) == F(2, 4)
        assert new_table_prob(DIR31, 3, 7, exact=True) == 0

    def test_poisson_dirichlet_step(self):
        assert new_table_prob(PD01, 1, 1, exact=True) == F(1, 2)
        assert new_table_prob(PD37, 2, 2, exact=True) == \
            (F(7, 10) + 2 * F(3, 10)) / (F(7, 10) + 2)

    def test_degenerate_theta_zero_start(self):
        # theta = 0 is well posed because the first step has p = 1
        pd = PoissonDirichlet(F(1, 2), 0)
        assert new_table_prob(pd, 0, 0, exact=True) == 1
        assert new_table_prob(pd, 1, 1, exact=True) == F(1, 2)

    def test_rejects_bad_indices(self):
        with pytest.raises(ValueError):
            new_table_prob(DIR31, 2, 1)
        with pytest.raises(ValueError):
            new_table_prob(DIR31, 0, 3)
        with pytest.raises(ValueError):
            new_table_prob(DIR31, 4, 9)

    def test_spec_wrapper(self):
        spec = CrpChainSpec(PD01)
        assert spec.step_prob(1, 1, exact=True) == F(1, 2)
        assert spec.support == math.inf
        assert CrpChainSpec(DIR31).support == 3

    def test_wrapper_rejects_non_seating_models(self):
        with pytest.raises(ValueError):
            CrpChainSpec(KM)


class TestTableCountLaw:
    def test_two_arrivals_single_table(self):
        dist = crp_distribution(PD01, 2, exact=True)
        assert dist[1] == F(1, 2) and dist[2] == F(1, 2)

    def test_three_arrivals_two_boxes(self):
        dist = crp_distribution(DIR21, 3, exact=True)
        assert dist == [0, F(1, 2), F(1, 2), 0]

    def test_sums_to_one_exactly(self):
        for model in (DIR21, DIR31, PD01, PD37):
            for n in (1, 5, 25, 50):
                dist = crp_distribution(model, n, exact=True)
                assert sum(dist) == 1
                assert all(p >= 0 for p in dist)

    def test_support_capped_at_box_count(self):
        dist = crp_distribution(DIR31, 10, exact=True)
        assert all(p == 0 for p in dist[4:])
        assert sum(dist[1:4]) == 1

    def test_accepts_spec_wrapper(self):
        direct = crp_distribution(PD01, 6, exact=True)
        wrapped = crp_distribution(CrpChainSpec(PD01), 6, exact=True)
        assert direct == wrapped

    def test_matches_block_rates_dirichlet(self):
        # q(i, j) of the falling chain is the chance that i arrivals
        # occupy j boxes, for every j < i
        for i in range(2, 26):
            dist = crp_distribution(DIR31, i, exact=True)
            for j in range(1, i):
                rate = block_count_rate(DIR31, i, j, exact=True).value
                assert rate == dist[j]

    def test_matches_block_rates_poisson_dirichlet(self):
        for model in (PD01, PD37):
            for i in (2, 5, 12, 25):
                dist = crp_distribution(model, i)
                for j in range(1, i):
                    rate = float(block_count_rate(model, i, j))
                    assert rate == pytest.approx(float(dist[j]),
                                                 rel=1e-10, abs=1e-300)

    def test_expected_tables_closed_form(self):
        for n in range(1, 21):
            got = expected_tables(DIR31, n, exact=True)
            want = 3 - 3 * F(rising_factorial(2, 1, n),
                             rising_factorial(3, 1, n))
            assert got == want

    def test_expected_tables_matches_distribution_mean(self):
        for model in (PD01, PD37):
            for n in (1, 7, 30):
                dist = crp_distribution(model, n, exact=True)
                mean = sum(j * p for j, p in enumerate(dist))
                assert expected_tables(model, n, exact=True) == mean


class TestCumulativeLaw:
    def test_matches_exact_cumulative_rates(self):
        for model in ALL_MODELS:
            for i in (1, 2, 5, 9):
                ms = np.arange(i + 1, i + 30)
                got = cum_block_rate_large(model, i, ms)
                for m, g in zip(ms, got):
                    want = float(block_cumulative_rate(model, int(m), i))
                    assert g == pytest.approx(want, rel=1e-9, abs=1e-12), \
                        (type(model).__name__, i, m)

    def test_total_rate_is_first_cumulative(self):
        for model in ALL_MODELS:
            for i in (1, 3, 8):
                want = float(block_count_total_rate(model, i + 1))
                assert total_rate_large(model, i) == pytest.approx(
                    want, rel=1e-9, abs=1e-12)

    def test_far_tail_beyond_exact_tables(self):
        # the closed routes keep working where the exact machinery
        # would need impractically deep tables
        ms = np.array([500, 2000])
        for model in (DIR31, PD01, DN, BETA):
            vals = cum_block_rate_large(model, 3, ms)
            assert np.all(vals >= 0) and np.all(np.diff(vals) <= 1e-12)

    def test_rejects_indices_at_or_below_level(self):
        with pytest.raises(ValueError):
            cum_block_rate_large(DIR31, 3, np.array([3, 4]))


class TestChainBuilders:
    def test_falling_rows_match_exact_rates(self):
        n = 14
        for model in ALL_MODELS:
            chain = build_falling_chain(model, n)
            for i in range(2, n + 1):
                lo, hi = chain.row_ptr[i], chain.row_ptr[i + 1]
                probs = np.diff(chain.cum[lo:hi], prepend=0.0)
                rates = probs * chain.exit_rate[i]
                row = {int(c): r for c, r in zip(chain.col[lo:hi], rates)}
                for j in range(1, i):
                    want = float(block_count_rate(model, i, j))
                    assert row.get(j, 0.0) == pytest.approx(
                        want, rel=1e-9, abs=1e-12), (type(model).__name__, i, j)

    def test_falling_exit_rates(self):
        for model in ALL_MODELS:
            chain = build_falling_chain(model, 12)
            assert chain.exit_rate[0] == 0.0 and chain.exit_rate[1] == 0.0
            for i in range(2, 13):
                want = float(block_count_total_rate(model, i))
                assert chain.exit_rate[i] == pytest.approx(
                    want, rel=1e-9, abs=1e-12)

    def test_rising_rows_match_exact_rates(self):
        T = 12
        for model in ALL_MODELS:
            chain = build_rising_chain(model, T)
            for i in range(1, T):
                lo, hi = chain.row_ptr[i], chain.row_ptr[i + 1]
                probs = np.diff(chain.cum[lo:hi], prepend=0.0)
                rates = probs * chain.exit_rate[i]
                row = {int(c): r for c, r in zip(chain.col[lo:hi], rates)}
                for j in range(i + 1, T):
                    want = float(fixation_rate(model, i, j))
                    assert row.get(j, 0.0) == pytest.approx(
                        want, rel=1e-9, abs=1e-12), (type(model).__name__, i, j)
                # everything at or past the threshold is lumped into one
                # absorbing column, with the exact combined mass
                lump = float(block_cumulative_rate(model, T, i))
                assert row.get(T, 0.0) == pytest.approx(
                    lump, rel=1e-9, abs=1e-12)

    def test_rising_exit_is_block_total_one_up(self):
        for model in ALL_MODELS:
            chain = build_rising_chain(model, 10)
            for i in range(1, 10):
                want = float(block_count_total_rate(model, i + 1))
                assert chain.exit_rate[i] == pytest.approx(
                    want, rel=1e-9, abs=1e-12)
            assert chain.exit_rate[10] == 0.0

    def test_infinity_mass_inside_the_lump(self):
        # the lump counts both far finite jumps and the direct jump to
        # infinity; for measures whose far rates die geometrically the
        # two pieces can be summed term by term
        T = 10
        for model in (DN0, ATOMS):
            chain = build_rising_chain(model, T)
            for i in (1, 4, 8):
                lo, hi = chain.row_ptr[i], chain.row_ptr[i + 1]
                probs = np.diff(chain.cum[lo:hi], prepend=0.0)
                row = {int(c): p * chain.exit_rate[i]
                       for c, p in zip(chain.col[lo:hi], probs)}
                finite_tail = sum(
                    float(fixation_rate(model, i, j)) for j in range(T, T + 80))
                inf_rate = float(fixation_rate_to_infinity(model, i))
                assert row.get(T, 0.0) >= inf_rate - 1e-12
                assert row.get(T, 0.0) == pytest.approx(
                    finite_tail + inf_rate, rel=1e-7, abs=1e-10)

    def test_lump_dominates_coverage_when_boxes_saturate(self):
        chain = build_rising_chain(DIR31, 10)
        for i in (4, 8):
            lo, hi = chain.row_ptr[i], chain.row_ptr[i + 1]
            probs = np.diff(chain.cum[lo:hi], prepend=0.0)
            row = {int(c): p * chain.exit_rate[i]
                   for c, p in zip(chain.col[lo:hi], probs)}
            inf_rate = float(fixation_rate_to_infinity(DIR31, i))
            assert inf_rate > 0
            assert row.get(10, 0.0) >= inf_rate - 1e-12

    def test_builders_cache(self):
        assert build_falling_chain(DIR31, 9) is build_falling_chain(DIR31, 9)
        assert build_rising_chain(DIR31, 9) is build_rising_chain(DIR31, 9)

    def test_rows_are_proper_distributions(self):
        for model in ALL_MODELS:
            for chain in (build_falling_chain(model, 15),
                          build_rising_chain(model, 15)):
                for s in range(chain.n_states):
                    lo, hi = chain.row_ptr[s], chain.row_ptr[s + 1]
                    if hi == lo:
                        assert chain.exit_rate[s] == 0.0
                        continue
                    cum = chain.cum[lo:hi]
                    assert cum[-1] == 1.0
                    assert np.all(np.diff(cum, prepend=0.0) >= 0)


class TestSamplePath:
    def test_accessors(self):
        p = SamplePath((0.0, 0.4, 1.1), (5, 3, 1), 2.0)
        assert p.n_jumps == 2
        assert p.final_state == 1
        assert p.state_at(0.0) == 5
        assert p.state_at(0.39) == 5
        assert p.state_at(0.4) == 3
        assert p.state_at(2.0) == 1

    def test_rejects_malformed_paths(self):
        with pytest.raises(ValueError):
            SamplePath((0.1, 0.4), (5, 3), 1.0)
        with pytest.raises(ValueError):
            SamplePath((0.0, 0.4, 0.4), (5, 3, 2), 1.0)
        with pytest.raises(ValueError):
            SamplePath((0.0, 0.4), (5, 5), 1.0)
        with pytest.raises(ValueError):
            SamplePath((0.0, 2.4), (5, 3), 1.0)
        with pytest.raises(ValueError):
            SamplePath((0.0, 0.2, 0.5), (5, math.inf, 7), 1.0)

    def test_infinite_terminal_state_allowed(self):
        p = SamplePath((0.0, 0.3), (4, math.inf), 1.0)
        assert p.final_state == math.inf


class TestFallingPaths:
    def test_paths_decrease_to_absorption(self):
        rng = np.random.default_rng(3)
        for model in ALL_MODELS:
            p = simulate_block_count(model, 25, rng=rng)
            assert p.states[0] == 25
            assert all(a > b for a, b in zip(p.states, p.states[1:]))
            assert p.final_state == 1

    def test_pair_merge_time_is_unit_exponential(self):
        rng = np.random.default_rng(11)
        times = [simulate_block_count(KM, 2, rng=rng).times[1]
                 for _ in range(4000)]
        assert np.mean(times) == pytest.approx(1.0, abs=0.08)

    def test_finite_horizon_freezes_the_path(self):
        p = simulate_block_count(KM, 30, horizon=0.01, rng=0)
        assert p.horizon == 0.01
        assert p.times[-1] <= 0.01
        assert p.final_state >= 1

    def test_zero_horizon(self):
        p = simulate_block_count(DIR31, 12, horizon=0.0, rng=0)
        assert p.states == (12,) and p.times == (0.0,)

    def test_rejects_bad_start(self):
        with pytest.raises(ValueError):
            simulate_block_count(KM, 0)


class TestRisingPaths:
    def test_pure_birth_climbs_one_level_at_a_time(self):
        for seed in range(25):
            p = simulate_fixation_line(KM, 3, horizon=0.05, rng=seed)
            finite = [s for s in p.states if s != math.inf]
            assert finite == list(range(3, 3 + len(finite)))

    def test_blow_up_closes_with_infinity(self):
        # past the explosion the level grows without bound; the cap
        # converts the climb into the infinite terminal state
        p = simulate_fixation_line(KM, 3, horizon=5.0, rng=1,
                                   level_cap=5_000)
        assert p.final_state == math.inf
        assert p.times[-1] < 5.0

    def test_full_coverage_jumps_straight_to_infinity(self):
        for seed in range(15):
            p = simulate_fixation_line(DIR31, 3, horizon=60.0, rng=seed)
            assert p.states == (3, math.inf)

    def test_dusty_line_never_reaches_infinity(self):
        for seed in range(40):
            p = simulate_fixation_line(DN, 2, horizon=3.0, rng=seed)
            assert all(b > a for a, b in zip(p.states, p.states[1:]))
            assert p.final_state != math.inf

    def test_unresolvable_row_raises_instead_of_faking_infinity(self):
        saw_error = False
        for seed in range(120):
            try:
                p = simulate_fixation_line(PD01, 2, horizon=1.5, rng=seed,
                                           max_terms=64)
            except RowSamplingError:
                saw_error = True
            else:
                assert p.final_state != math.inf
        assert saw_error

    def test_cap_on_non_exploding_line_raises(self):
        with pytest.raises(RowSamplingError):
            for seed in range(200):
                simulate_fixation_line(PD01, 2, horizon=4.0, rng=seed,
                                       level_cap=40)

    def test_rejects_infinite_horizon(self):
        with pytest.raises(ValueError):
            simulate_fixation_line(KM, 2, horizon=math.inf)

    def test_rejects_cap_below_start(self):
        with pytest.raises(ValueError):
            simulate_fixation_line(KM, 50, horizon=1.0, level_cap=10)


class TestExperimentRows:
    def test_stderr_gate(self):
        row = ExperimentRow("x", 1.05, stderr=0.02, reference=1.0)
        assert row.consistent(4.0) is True
        assert row.consistent(2.0) is False

    def test_abs_tol_gate(self):
        row = ExperimentRow("x", 1.04, reference=1.0, abs_tol=0.05)
        assert row.consistent(4.0) is True
        row = ExperimentRow("x", 1.06, reference=1.0, abs_tol=0.05)
        assert row.consistent(4.0) is False

    def test_combined_gate_budgets_bias_plus_noise(self):
        row = ExperimentRow("x", 1.06, stderr=0.01, reference=1.0,
                            abs_tol=0.05)
        assert row.consistent(4.0) is True
        assert row.consistent(0.5) is False

    def test_informational_rows_decide_nothing(self):
        assert ExperimentRow("x", 1.0).consistent(4.0) is None
        assert ExperimentRow("x", 1.0, reference=2.0).consistent(4.0) is None

    def test_report_pass_ignores_informational_rows(self):
        rows = (ExperimentRow("a", 1.0, stderr=0.1, reference=1.01),
                ExperimentRow("b", 9.9, reference=1.0))
        rep = ExperimentReport("demo", rows, sigma=4.0)
        assert rep.passed
        rows = rows + (ExperimentRow("c", 2.0, stderr=0.01, reference=1.0),)
        assert not ExperimentReport("demo", rows, sigma=4.0).passed

    def test_report_round_trips_to_dict(self):
        rep = mc_duality_test(KM, 4, 2, 0.3, reps=500, seed=1)
        d = rep.to_dict()
        assert d["label"].startswith("duality")
        assert {"name", "estimate", "consistent"} <= set(d["rows"][0])
        assert "pass" in str(rep) or "FAIL" in str(rep)


class TestMcDuality:
    def test_trivial_when_start_at_or_below_target(self):
        rep = mc_duality_test(KM, 5, 8, 0.3, reps=10)
        assert rep.passed
        assert all(r.estimate == 1.0 for r in rep.rows[:2])

    def test_kingman_sides_agree(self):
        rep = mc_duality_test(KM, 6, 3, 0.5, reps=6000, seed=5)
        assert rep.passed
        diff = rep.rows[2]
        assert diff.reference == 0.0 and diff.stderr > 0

    def test_seating_and_heavy_models_agree(self):
        for model in (DIR31, PD01, DN0):
            rep = mc_duality_test(model, 12, 3, 0.4, reps=6000, seed=8)
            assert rep.passed, str(rep)

    def test_deterministic_given_seed(self):
        a = mc_duality_test(DIR31, 9, 2, 0.4, reps=2000, seed=17)
        b = mc_duality_test(DIR31, 9, 2, 0.4, reps=2000, seed=17)
        assert a.to_dict() == b.to_dict()

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            mc_duality_test(KM, 0, 1, 0.5)
        with pytest.raises(ValueError):
            mc_duality_test(KM, 3, 1, 0.0)


class TestJumpsAndAbsorption:
    def test_kingman_from_ten(self):
        rep = jumps_and_absorption(KM, 10, reps=8000, seed=7)
        assert rep.passed
        jumps = next(r for r in rep.rows if "jump" in r.name)
        tau = next(r for r in rep.rows if "absorption" in r.name)
        # every path makes exactly n - 1 merges
        assert jumps.estimate == 9.0 and jumps.stderr == 0.0
        # sum over k of 2 / (k (k - 1)) telescopes
        assert tau.reference == pytest.approx(1.8, abs=1e-12)

    def test_recursion_reference_matches_limit_law_route(self):
        # the backward recursion on the packed rows and the seating
        # recursion of the limit laws compute the same expectation
        rep = jumps_and_absorption(DIR21, 50, reps=400, seed=1)
        tau = next(r for r in rep.rows if "absorption" in r.name)
        laws = dirichlet_limit_laws(2, 1)
        assert tau.reference == pytest.approx(
            float(laws.absorption_mean(50)), rel=1e-12)

    def test_carries_raw_batch(self):
        rep = jumps_and_absorption(KM, 6, reps=300, seed=2)
        assert rep.raw is not None and len(rep.raw.states) == 300


class TestDirichletLimitLaws:
    def test_two_box_model_worked_values(self):
        laws = dirichlet_limit_laws(2, 1)
        assert laws.jump_pmf_limit == (0, 0, 1)
        assert laws.expected_absorption_limit == F(5, 2)
        assert laws.absorption_mean(1) == 0
        assert laws.absorption_mean(2) == F(3, 2)
        assert laws.absorption_mean(3) == F(7, 4)

    def test_jump_count_limit_is_exact_for_large_n(self):
        laws = dirichlet_limit_laws(2, 1)
        for n in (10, 100, 1000):
            assert sum(laws.jump_pmf(n)) == 1

    def test_total_variation_decreases(self):
        for laws in (dirichlet_limit_laws(2, 1), dirichlet_limit_laws(3, 1)):
            tvs = [laws.tv_to_limit(n) for n in (10, 100, 1000)]
            assert tvs[0] > tvs[1] > tvs[2] >= 0
            assert tvs[2] < F(1, 20)

    def test_jump_pmf_against_matrix_powers(self):
        # dual route: drive the embedded jump chain of the falling
        # process directly and read off the step-count law
        laws = dirichlet_limit_laws(3, 1)
        n = 6
        chain = build_falling_chain(DIR31, n)
        P = np.zeros((n + 1, n + 1))
        P[1, 1] = 1.0
        for s in range(2, n + 1):
            lo, hi = chain.row_ptr[s], chain.row_ptr[s + 1]
            probs = np.diff(chain.cum[lo:hi], prepend=0.0)
            for c, p in zip(chain.col[lo:hi], probs):
                P[s, int(c)] += p
        want = laws.jump_pmf(n)
        dist = np.zeros(n + 1)
        dist[n] = 1.0
        absorbed = 0.0
        for k in range(len(want)):
            assert dist[1] - absorbed == pytest.approx(float(want[k]),
                                                       abs=1e-12)
            absorbed = dist[1]
            dist = dist @ P

    def test_absorption_mean_approaches_limit(self):
        laws = dirichlet_limit_laws(2, 1)
        gaps = [abs(laws.absorption_mean(n) - laws.expected_absorption_limit)
                for n in (10, 100, 1000)]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_empirical_jump_counts_match_exact_law(self):
        laws = dirichlet_limit_laws(2, 1)
        rep = jumps_and_absorption(DIR21, 100, reps=8000, seed=3)
        counts = np.bincount(rep.raw.jumps, minlength=4)[:4] / 8000
        exact = [float(p) for p in laws.jump_pmf(100)]
        for e, x in zip(counts, exact):
            se = math.sqrt(max(x * (1 - x), 1e-12) / 8000)
            assert abs(e - x) <= 5 * se + 1e-9


class TestDustExperiment:
    def test_zero_horizon_moments_are_exact(self):
        rep = dust_convergence_experiment(DIR31, n_list=(50,), t=0.0,
                                          reps=200, seed=0)
        for row in rep.rows:
            assert row.estimate == 1.0 and row.reference == 1.0

    def test_seating_model_matches_unit_decay(self):
        rep = dust_convergence_experiment(DIR31, n_list=(100, 500), t=0.5,
                                          reps=4000, seed=4)
        assert rep.passed
        assert all(r.reference == pytest.approx(math.exp(-0.5))
                   for r in rep.rows)

    def test_atomic_dust_decay(self):
        rep = dust_convergence_experiment(DN, n_list=(100, 400), t=0.4,
                                          reps=4000, seed=9)
        assert rep.passed
        # phi(k) = w (1 - dust^k) with dust = 0.4
        assert rep.rows[0].reference == pytest.approx(math.exp(-0.4 * 0.6))

    def test_scaled_line_grid_matches_poisson_tail(self):
        rep = dust_convergence_experiment(
            DN, n_list=(400,), t=0.4, reps=4000, seed=9,
            y_grid=(0.25, 0.5, 1.5))
        grid = [r for r in rep.rows if r.name.startswith("P(n/L")]
        lam = 0.4
        assert grid[0].reference == pytest.approx(
            1 - math.exp(-lam) * (1 + lam))
        assert grid[1].reference == pytest.approx(1 - math.exp(-lam))
        assert grid[2].estimate == 1.0
        assert rep.passed

    def test_heavy_measure_converges_slowly_but_within_budget(self):
        rep = dust_convergence_experiment(BetaLambda(F(3, 2), 1),
                                          n_list=(150, 600), t=0.3,
                                          reps=3000, seed=2)
        assert rep.passed
        assert "quadrature" in rep.note

    def test_rejects_dust_free_models(self):
        for model in (KM, BetaLambda(1, 1)):
            with pytest.raises(ValueError):
                dust_convergence_experiment(model, reps=10)

    def test_rejects_bad_grid(self):
        with pytest.raises(ValueError):
            dust_convergence_experiment(DN, n_list=(50,), reps=10,
                                        y_grid=(0.0,))


class TestLogFormInvariant:
    def test_drop_of_count_matches_rise_of_line(self):
        # with proper dust both chains shrink or stretch the scale by
        # the same random factor, so the two log increments agree
        n, t, reps = 2000, 0.25, 2500
        chain = build_falling_chain(DN, n)
        c1, c2 = np.random.SeedSequence(42).spawn(2)
        batch = run_paths(chain, np.full(reps, n, dtype=np.int64), t,
                          path_seeds(c1, reps))
        drop = np.log(n) - np.log(batch.states)
        rng = np.random.default_rng(c2)
        rise = np.empty(reps)
        for k in range(reps):
            p = simulate_fixation_line(DN, n, t, rng=rng)
            rise[k] = math.log(p.final_state) - math.log(n)
        se = math.hypot(drop.std(ddof=1), rise.std(ddof=1)) / math.sqrt(reps)
        assert abs(drop.mean() - rise.mean()) <= 4 * se + 0.02
