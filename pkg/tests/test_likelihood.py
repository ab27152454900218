import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regime_select import (
    ModelSpec,
    RegimeParams,
    Trajectory,
    conditional_loglik,
    lipschitz_probe,
    loglik_bruteforce,
    loglik_forward,
    ols_fit,
    path_prior_loglik,
    permute_spec,
    segment_stats,
    simulate,
)
from regime_select._validation import generator

from conftest import random_instance, random_valid_spec


def spec_theta(spec):
    return np.column_stack((spec.intercepts, spec.slopes))


class TestSegmentStats:
    def test_counting_example(self):
        traj = Trajectory(y0=0.0, y=np.array([1.0, 2.0, 3.0]), x=np.array([0, 0, 1]))
        stats = segment_stats(traj, 2)
        assert list(stats.counts) == [2, 1]
        assert stats.trans_counts[0, 0] == 1
        assert stats.trans_counts[0, 1] == 1
        assert stats.trans_counts[1, 0] == 0
        assert stats.trans_counts[1, 1] == 0

    def test_design_uses_lagged_column(self):
        traj = Trajectory(y0=0.5, y=np.array([1.0, 2.0, 3.0]), x=np.array([0, 0, 0]))
        stats = segment_stats(traj, 1)
        assert np.array_equal(stats.design[0], [[1.0, 0.5], [1.0, 1.0], [1.0, 2.0]])
        assert np.array_equal(stats.response[0], [1.0, 2.0, 3.0])

    def test_out_of_range_state(self):
        traj = Trajectory(y0=0.0, y=np.array([1.0]), x=np.array([3]))
        with pytest.raises(ValueError):
            segment_stats(traj, 2)

    @given(seed=st.integers(min_value=0, max_value=5000))
    @settings(max_examples=40, deadline=None)
    def test_count_partition_property(self, seed):
        rng = generator(seed)
        m = int(rng.integers(1, 5))
        n = int(rng.integers(1, 40))
        x = rng.integers(0, m, size=n)
        traj = Trajectory(y0=0.0, y=rng.normal(size=n), x=x)
        stats = segment_stats(traj, m)
        assert stats.counts.sum() == n
        assert stats.trans_counts.sum() == n - 1
        covered = np.sort(np.concatenate(stats.indices))
        assert np.array_equal(covered, np.arange(n))


class TestConditionalLoglik:
    def test_standard_normal_point(self):
        traj = Trajectory(y0=0.0, y=np.array([0.0]), x=np.array([0]))
        value = conditional_loglik([[0.0, 0.0]], [1.0], traj)
        assert value == pytest.approx(-0.9189385332046727, abs=1e-15)

    def test_matches_pointwise_factorization(self):
        spec, traj = random_instance(21, 2, 6)
        value = conditional_loglik(spec_theta(spec), spec.variances, traj)
        by_step = 0.0
        for k in range(traj.n):
            i = traj.x[k]
            mean = spec.intercepts[i] + spec.slopes[i] * traj.lagged[k]
            by_step += -0.5 * math.log(2 * math.pi * spec.variances[i])
            by_step += -0.5 * (traj.y[k] - mean) ** 2 / spec.variances[i]
        assert value == pytest.approx(by_step, abs=1e-12)

    def test_rejects_nonpositive_variance(self):
        traj = Trajectory(y0=0.0, y=np.array([0.0]), x=np.array([0]))
        with pytest.raises(ValueError):
            conditional_loglik([[0.0, 0.0]], [0.0], traj)

    def test_variance_inflation_degrades_fit(self):
        _, traj = random_instance(33, 2, 50)
        stats = segment_stats(traj, 2)
        fits = ols_fit(stats)
        theta = np.array([f.theta for f in fits])
        sigma2 = np.array([f.sigma2 for f in fits])
        base = conditional_loglik(theta, sigma2, traj)
        for factor in (1.5, 3.0, 10.0):
            assert conditional_loglik(theta, sigma2 * factor, traj) < base


class TestPathPrior:
    def test_single_state_is_zero(self):
        assert path_prior_loglik([[1.0]], [0, 0, 0, 0]) == 0.0

    def test_symmetric_chain(self):
        A = [[0.5, 0.5], [0.5, 0.5]]
        for x in ([0], [0, 1, 1], [1, 0, 1, 0]):
            assert path_prior_loglik(A, x) == pytest.approx(len(x) * math.log(0.5), abs=1e-12)

    def test_hand_computed_value(self):
        A = [[0.9, 0.1], [0.2, 0.8]]
        expected = math.log(2.0 / 3.0) + math.log(0.1)
        assert path_prior_loglik(A, [0, 1]) == pytest.approx(expected, abs=1e-12)

    def test_zero_probability_transition(self):
        A = [[0.0, 1.0], [0.5, 0.5]]
        assert path_prior_loglik(A, [0, 0]) == -math.inf


class TestForwardVsBruteForce:
    def test_single_state_equals_conditional(self):
        spec, traj = random_instance(5, 1, 12)
        labeled = Trajectory(traj.y0, traj.y, np.zeros(traj.n, dtype=np.int64))
        expected = conditional_loglik(spec_theta(spec), spec.variances, labeled)
        assert loglik_forward(spec, traj) == pytest.approx(expected, abs=1e-10)

    def test_two_term_mixture(self):
        spec = random_valid_spec(8, 2)
        traj = Trajectory(y0=0.4, y=np.array([1.2]))
        lam = spec.stationary
        dens = [
            lam[i]
            * math.exp(
                -0.5 * math.log(2 * math.pi * spec.variances[i])
                - 0.5
                * (traj.y[0] - spec.intercepts[i] - spec.slopes[i] * traj.y0) ** 2
                / spec.variances[i]
            )
            for i in range(2)
        ]
        assert loglik_bruteforce(spec, traj) == pytest.approx(math.log(sum(dens)), abs=1e-12)

    @pytest.mark.parametrize("m,n", [(2, 4), (2, 8), (3, 5), (3, 8)])
    def test_forward_matches_bruteforce(self, m, n):
        for trial in range(25):
            spec, traj = random_instance(1000 + 13 * trial + m + n, m, n)
            assert abs(loglik_forward(spec, traj) - loglik_bruteforce(spec, traj)) < 1e-9

    def test_label_permutation_invariance(self):
        spec, traj = random_instance(77, 3, 7)
        base = loglik_forward(spec, traj)
        unlabeled = Trajectory(traj.y0, traj.y)
        for perm in ([1, 2, 0], [2, 1, 0], [0, 2, 1]):
            assert loglik_forward(permute_spec(spec, perm), unlabeled) == pytest.approx(
                base, abs=1e-10
            )

    def test_guard_on_instance_size(self):
        spec = random_valid_spec(2, 2)
        traj = Trajectory(y0=0.0, y=np.zeros(21))
        with pytest.raises(ValueError):
            loglik_bruteforce(spec, traj)


class TestOlsFit:
    def test_exact_interpolation_flooring(self):
        y = np.array([1.0, 2.0, 3.5])
        traj = Trajectory(y0=0.0, y=0.5 + 1.5 * np.concatenate(([0.0], y[:-1])), x=np.array([0, 0, 0]))
        stats = segment_stats(traj, 1)
        fit = ols_fit(stats, variance_floor=1e-4)[0]
        assert fit.theta == pytest.approx([0.5, 1.5], abs=1e-12)
        assert fit.rss == pytest.approx(0.0, abs=1e-20)
        assert fit.sigma2 == 1e-4

    def test_two_points_exact_line(self):
        traj = Trajectory(y0=1.0, y=np.array([2.0, 5.0]), x=np.array([0, 0]))
        fit = ols_fit(segment_stats(traj, 1))[0]
        # line through (1, 2) and (2, 5)
        assert fit.theta == pytest.approx([-1.0, 3.0], abs=1e-12)
        assert fit.rss == pytest.approx(0.0, abs=1e-20)

    def test_matches_normal_equations_oracle(self):
        for trial in range(30):
            _, traj = random_instance(500 + trial, 2, 40)
            stats = segment_stats(traj, 2)
            fits = ols_fit(stats)
            for i, fit in enumerate(fits):
                W, Y = stats.design[i], stats.response[i]
                oracle = np.linalg.solve(W.T @ W, W.T @ Y)
                assert np.max(np.abs(fit.theta - oracle)) < 1e-9 * max(1.0, np.max(np.abs(oracle)))

    def test_perturbation_optimality(self):
        _, traj = random_instance(91, 2, 60)
        stats = segment_stats(traj, 2)
        fits = ols_fit(stats)
        theta = np.array([f.theta for f in fits])
        sigma2 = np.array([f.sigma2 for f in fits])
        base = conditional_loglik(theta, sigma2, traj)
        rng = generator(17)
        for _ in range(100):
            delta = rng.normal(scale=0.05, size=theta.shape)
            eps = rng.normal(scale=0.05, size=sigma2.shape)
            perturbed = conditional_loglik(theta + delta, sigma2 * np.exp(eps), traj)
            assert perturbed <= base + 1e-10

    def test_insufficient_data(self):
        traj = Trajectory(y0=0.0, y=np.array([1.0, 2.0]), x=np.array([0, 1]))
        with pytest.raises(ValueError):
            ols_fit(segment_stats(traj, 2))

    def test_singular_design(self):
        traj = Trajectory(y0=1.0, y=np.array([1.0, 1.0, 1.0]), x=np.array([0, 0, 0]))
        with pytest.raises(ValueError):
            ols_fit(segment_stats(traj, 1))


class TestLipschitzProbe:
    def test_zero_distance_guard(self):
        spec, traj = random_instance(3, 2, 20)
        with pytest.raises(ValueError):
            lipschitz_probe(spec, spec, traj)

    def test_intercept_derivative_limit(self):
        spec, traj = random_instance(12, 1, 400)
        delta = 1e-6
        shifted = ModelSpec(
            [RegimeParams(spec.regimes[0].b + delta, spec.regimes[0].alpha, spec.regimes[0].sigma2)],
            spec.transition,
        )
        ratio = lipschitz_probe(spec, shifted, traj)
        resid = traj.y - spec.slopes[0] * traj.lagged - spec.intercepts[0]
        target = abs(resid.sum()) / (traj.n * spec.variances[0])
        assert ratio == pytest.approx(target, abs=1e-3)

    def test_ratios_do_not_grow_with_n(self, benchmark_spec):
        stream = simulate(benchmark_spec, 800, y0=0.0, seed=31)
        rng = generator(55)
        maxima = {}
        for n in (200, 400, 800):
            prefix = Trajectory(stream.y0, stream.y[:n])
            ratios = []
            for _ in range(50):
                perturbed = _perturb(benchmark_spec, rng, scale=1e-3)
                ratios.append(lipschitz_probe(benchmark_spec, perturbed, prefix))
            maxima[n] = max(ratios)
        assert maxima[400] <= 2.0 * maxima[200]
        assert maxima[800] <= 2.0 * maxima[200]


def _perturb(spec, rng, scale):
    regimes = [
        RegimeParams(
            r.b + scale * rng.uniform(-1, 1),
            r.alpha + scale * rng.uniform(-1, 1),
            r.sigma2 * (1.0 + scale * rng.uniform(-1, 1)),
        )
        for r in spec.regimes
    ]
    A = spec.transition + scale * rng.uniform(-1, 1, size=spec.transition.shape)
    A = np.maximum(A, 1e-9)
    A /= A.sum(axis=1, keepdims=True)
    return ModelSpec(regimes, A)
