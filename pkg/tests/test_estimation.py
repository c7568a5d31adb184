from datetime import datetime, timedelta

import numpy as np
import pytest
import scipy.linalg
import scipy.stats

from conftest import TWO_STATE, random_generator
from ctmc_mobility import (
    BinningScheme,
    Generator,
    InitialDistribution,
    TransitionCounts,
    count_transitions,
    delta_method_se,
    discretize,
    embed_generator,
    empirical_transition_matrix,
    filter_outliers,
    fit_series,
    principal_logm,
    simulate_trajectory,
    stationary_distribution,
    weibull_mle,
)
from ctmc_mobility.errors import (
    AllZeroCounts,
    DegenerateSample,
    EmptySeries,
    LogarithmFailure,
    ModelError,
)
from ctmc_mobility.estimation import project_to_generator, time_breaks, weibull_loglik
from ctmc_mobility.oracle import values_from_states

SCHEME = BinningScheme()


class TestFilterOutliers:
    def test_negative_value_dropped_and_pair_broken(self):
        f = filter_outliers([3, -1, 5])
        assert f.values.tolist() == [3, 5]
        assert f.dropped == 1
        assert f.break_points == {1}
        assert count_transitions(discretize(f.values), f.break_points, 11).counts.sum() == 0

    def test_clean_series_unchanged(self):
        f = filter_outliers([3, 4, 5])
        assert f.values.tolist() == [3, 4, 5]
        assert f.dropped == 0
        assert not f.break_points

    def test_everything_dropped(self):
        f = filter_outliers([60])
        assert f.values.size == 0
        assert f.dropped == 1

    def test_nan_dropped(self):
        f = filter_outliers([1.0, float("nan"), 2.0, 51.0, 3.0])
        assert f.values.tolist() == [1.0, 2.0, 3.0]
        assert f.break_points == {1, 2}


class TestDiscretize:
    @pytest.mark.parametrize("value,state", [(3.7, 1), (21.3, 10), (2.0, 1), (0.0, 0), (19.999, 9), (20.0, 10)])
    def test_examples(self, value, state):
        assert discretize([value], SCHEME).tolist() == [state]

    def test_rounding_at_boundaries(self):
        scheme = BinningScheme(bin_width=0.2, num_states=10)
        assert discretize([0.6, 0.4, 0.2, 0.7, 0.59], scheme).tolist() == [3, 2, 1, 3, 2]

    def test_empty(self):
        with pytest.raises(EmptySeries):
            discretize([], SCHEME)

    def test_below_lower_bound(self):
        with pytest.raises(ModelError):
            discretize([-0.1], SCHEME)

    def test_length_preserved(self):
        x = np.random.default_rng(0).uniform(0, 30, 100)
        assert discretize(x, SCHEME).shape == (100,)


class TestCounting:
    def test_hand_count(self):
        c = count_transitions([0, 0, 1, 0])
        assert c.counts.tolist() == [[1, 1], [1, 0]]

    def test_break_between_pair(self):
        assert count_transitions([0, 1], {1}).counts.sum() == 0

    def test_single_observation(self):
        assert count_transitions([4], num_states=5).counts.sum() == 0

    def test_counts_bounded_by_pairs(self):
        with pytest.raises(ModelError):
            TransitionCounts(np.array([[2, 0], [0, 0]]), 2)

    def test_row_normalization(self):
        p = empirical_transition_matrix(TransitionCounts(np.array([[1, 1], [1, 0]]), 4))
        assert p.tolist() == [[0.5, 0.5], [1.0, 0.0]]

    def test_zero_row_self_loop(self):
        p = empirical_transition_matrix(TransitionCounts(np.array([[2, 0], [0, 0]]), 3))
        assert p.tolist() == [[1.0, 0.0], [0.0, 1.0]]

    def test_zero_row_uniform(self):
        p = empirical_transition_matrix(TransitionCounts(np.array([[2, 0], [0, 0]]), 3), "uniform")
        assert p.tolist() == [[1.0, 0.0], [0.5, 0.5]]

    def test_all_zero(self):
        with pytest.raises(AllZeroCounts):
            empirical_transition_matrix(TransitionCounts(np.zeros((2, 2), dtype=int), 1))

    def test_long_trajectory_matches_hourly_matrix(self):
        q = np.array([[-0.3, 0.2, 0.1], [0.4, -0.5, 0.1], [0.2, 0.3, -0.5]])
        g = Generator(q)
        a = InitialDistribution(stationary_distribution(g))
        n = 200_000
        states = simulate_trajectory(g, a, float(n), seed=21).state_at(np.arange(n))
        c = count_transitions(states, num_states=3)
        p_hat = empirical_transition_matrix(c)
        p_true = scipy.linalg.expm(q)
        se = np.sqrt(p_true * (1 - p_true) / c.row_totals[:, None])
        assert np.all(np.abs(p_hat - p_true) < 3 * se)


class TestMatrixLog:
    def test_identity(self):
        res = embed_generator(np.eye(3), 1.0)
        np.testing.assert_array_equal(res.generator.rates, np.zeros((3, 3)))
        assert res.negativity_mass == 0.0

    def test_two_state_round_trip(self):
        P = scipy.linalg.expm(np.array(TWO_STATE))
        res = embed_generator(P, 1.0)
        np.testing.assert_allclose(res.generator.rates, TWO_STATE, atol=1e-10)
        assert res.negativity_mass == 0.0

    def test_two_state_closed_form(self):
        P = np.array([[0.9, 0.1], [0.2, 0.8]])
        lam = np.trace(P) - 1
        expected = np.log(lam) / (lam - 1) * (P - np.eye(2))
        res = embed_generator(P, 1.0)
        np.testing.assert_allclose(res.generator.rates, expected, atol=1e-12)
        np.testing.assert_allclose(res.generator.rates, np.real(scipy.linalg.logm(P)), atol=1e-12)
        assert res.reconstruction_error < 1e-12

    def test_time_step_scales(self):
        P = np.array([[0.9, 0.1], [0.2, 0.8]])
        np.testing.assert_allclose(
            embed_generator(P, 0.5).generator.rates, 2 * embed_generator(P, 1.0).generator.rates, atol=1e-14
        )

    @pytest.mark.parametrize("method", ["iss", "eig"])
    def test_methods_agree_with_scipy(self, method):
        rng = np.random.default_rng(13)
        for _ in range(10):
            g = random_generator(rng, int(rng.integers(2, 9)), max_rate=0.4)
            P = scipy.linalg.expm(g.rates)
            log, info = principal_logm(P, method=method)
            assert info["method"] == method
            np.testing.assert_allclose(log, np.real(scipy.linalg.logm(P)), atol=1e-10)

    def test_negative_eigenvalue(self):
        with pytest.raises(LogarithmFailure):
            embed_generator(np.array([[0.0, 1.0], [1.0, 0.0]]), 1.0)

    def test_not_embeddable_is_projected(self):
        # a cyclic permutation-like matrix has a log with negative off-diagonals
        P = np.array([[0.6, 0.4, 0.0], [0.0, 0.6, 0.4], [0.4, 0.0, 0.6]])
        res = embed_generator(P, 1.0)
        assert res.negativity_mass > 0
        q = res.generator.rates
        assert np.all(q[~np.eye(3, dtype=bool)] >= 0)
        assert np.all(q.sum(axis=1) == 0)
        assert res.reconstruction_error > 1e-3

    def test_projection(self):
        q, mass = project_to_generator(np.array([[-1.0, 1.5, -0.5], [0.2, -0.2, 0.0], [0.1, 0.1, -0.2]]))
        assert mass == 0.5
        np.testing.assert_array_equal(q[0], [-1.5, 1.5, 0.0])

    def test_rejects_non_stochastic(self):
        with pytest.raises(ModelError):
            embed_generator(np.array([[0.9, 0.2], [0.2, 0.8]]), 1.0)

    def test_diagnostics(self):
        d = embed_generator(np.array([[0.9, 0.1], [0.2, 0.8]])).diagnostics()
        assert {"negativity_mass", "reconstruction_error", "logm_method", "square_roots"} <= set(d)


def weibull_gradient(x, lam, k):
    z = (x / lam) ** k
    dlam = k / lam * (z.sum() - x.size)
    dk = x.size / k + np.sum(np.log(x / lam) * (1 - z))
    return dlam, dk


class TestWeibull:
    def test_recovers_parameters(self):
        x = 9.22 * np.random.default_rng(1).weibull(4.13, 100_000)
        w = weibull_mle(x)
        assert w.scale_lambda == pytest.approx(9.22, rel=0.02)
        assert w.shape_k == pytest.approx(4.13, rel=0.02)

    def test_matches_scipy_fit(self):
        x = 4.97 * np.random.default_rng(2).weibull(1.62, 5000)
        w = weibull_mle(x)
        k, _, lam = scipy.stats.weibull_min.fit(x, floc=0)
        assert w.shape_k == pytest.approx(k, rel=1e-4)
        assert w.scale_lambda == pytest.approx(lam, rel=1e-4)

    def test_exponential_special_case(self):
        x = np.random.default_rng(3).exponential(6.0, 50_000)
        w = weibull_mle(x)
        assert w.shape_k == pytest.approx(1.0, abs=0.02)
        assert w.scale_lambda == pytest.approx(6.0, rel=0.02)

    def test_gradient_vanishes(self):
        x = 7.0 * np.random.default_rng(4).weibull(2.2, 20_000)
        w = weibull_mle(x)
        dlam, dk = weibull_gradient(x, w.scale_lambda, w.shape_k)
        assert abs(dlam) < 1e-6 * x.size
        assert abs(dk) < 1e-6 * x.size

    def test_degenerate(self):
        with pytest.raises(DegenerateSample):
            weibull_mle([1, 1, 1])

    def test_zeros_excluded(self):
        x = np.concatenate([[0.0, 0.0], 5.0 * np.random.default_rng(5).weibull(2.0, 1000)])
        w = weibull_mle(x)
        assert w.zeros_dropped == 2
        assert w.n_samples == 1000

    @pytest.mark.parametrize("bad", [[1.0], [-1.0, 2.0], []])
    def test_invalid_samples(self, bad):
        with pytest.raises(ModelError):
            weibull_mle(bad)

    def test_loglik_maximized(self):
        x = 3.0 * np.random.default_rng(6).weibull(1.7, 2000)
        w = weibull_mle(x)
        best = weibull_loglik(x, w.scale_lambda, w.shape_k)
        for dl, dk in [(0.01, 0), (-0.01, 0), (0, 0.01), (0, -0.01)]:
            assert weibull_loglik(x, w.scale_lambda + dl, w.shape_k + dk) < best


class TestDeltaMethod:
    def test_single_entry_matches_binomial(self):
        p = np.array([[0.7, 0.2, 0.1], [0.3, 0.3, 0.4], [0.5, 0.25, 0.25]])
        totals = np.array([1000, 400, 250])
        se = delta_method_se(p, totals, lambda m: np.array([m[0, 1], m[2, 0]]))
        np.testing.assert_allclose(se, [np.sqrt(0.2 * 0.8 / 1000), np.sqrt(0.5 * 0.5 / 250)], rtol=1e-6)

    def test_stationary_law_matches_simulation(self):
        # spread of an estimated stationary law across repeated samples
        rng = np.random.default_rng(7)
        p = np.array([[0.8, 0.2], [0.3, 0.7]])
        totals = np.array([500, 500])

        def first_stationary_entry(m):
            return np.array([m[1, 0] / (m[0, 1] + m[1, 0])])

        se = delta_method_se(p, totals, first_stationary_entry)[0]
        draws = []
        for _ in range(4000):
            m = np.array([rng.multinomial(n, row) / n for row, n in zip(p, totals)])
            draws.append(first_stationary_entry(m)[0])
        assert np.std(draws) == pytest.approx(se, rel=0.05)


class TestPipeline:
    def test_time_breaks(self):
        t0 = datetime(2020, 1, 1, 22)
        stamps = [t0 + timedelta(hours=h) for h in (0, 1, 2, 3, 5)]
        assert time_breaks(stamps) == {2, 4}
        assert time_breaks(stamps, daily=False) == {4}

    def test_recovers_generator(self):
        q = np.array([[-0.3, 0.2, 0.1], [0.4, -0.5, 0.1], [0.2, 0.3, -0.5]])
        g = Generator(q)
        n = 200_000
        states = simulate_trajectory(g, InitialDistribution(stationary_distribution(g)), float(n), 3).state_at(
            np.arange(n)
        )
        scheme = BinningScheme(bin_width=2.0, num_states=3)
        values = values_from_states(states, scheme, np.random.default_rng(4))
        est = fit_series(values, scheme=scheme)
        assert est.counts.total_observations == n
        np.testing.assert_allclose(est.embedding.generator.rates, q, atol=0.02)
        np.testing.assert_allclose(est.occupancy, stationary_distribution(g), atol=0.01)

    def test_outlier_reported(self):
        values = [1.0] * 5 + [3.0] * 5 + [-1.0] + [3.0] * 5 + [5.0] * 5 + [1.0] * 5 + [5.0] * 3 + [3.0] * 3
        est = fit_series(values, scheme=BinningScheme(num_states=3))
        assert est.dropped_outliers == 1
        assert est.report()["dropped"] == {"outliers": 1, "missing": 0}

    def test_day_boundaries_break_pairs(self):
        t0 = datetime(2020, 1, 1, 0)
        stamps = [t0 + timedelta(hours=h) for h in range(48)]
        values = np.tile([1.0, 1.0, 1.0, 3.0, 3.0, 3.0], 8)
        est = fit_series(values, stamps, scheme=BinningScheme(num_states=2))
        assert est.counts.counts.sum() == 46

    def test_empty(self):
        with pytest.raises(EmptySeries):
            fit_series([])
        with pytest.raises(EmptySeries):
            fit_series([-5.0, 70.0])

    def test_degenerate_weibull_recorded(self):
        est = fit_series([1.0] * 5, scheme=BinningScheme(num_states=2))
        assert est.weibull is None
        assert "DegenerateSample" in est.report()["weibull"]["error"]
