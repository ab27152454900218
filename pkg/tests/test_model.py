import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from regime_select import (
    ModelSpec,
    ModelValidationError,
    NoStationaryDistributionError,
    ParameterBounds,
    RegimeParams,
    Trajectory,
    permute_spec,
    simulate,
    stability_index,
    stationary_distribution,
    validate_model,
)
from regime_select._validation import generator

from conftest import random_valid_spec


def single_state(alpha=0.5, b=0.0, sigma2=1.0):
    return ModelSpec([RegimeParams(b, alpha, sigma2)], [[1.0]])


class TestValidateModel:
    def test_valid_single_state(self):
        assert validate_model(single_state()) == []

    def test_stability_boundary_rejected(self):
        report = validate_model(single_state(alpha=1.0))
        assert [v.name for v in report] == ["stability"]

    def test_reducible_chain_flagged(self):
        spec = ModelSpec(
            [RegimeParams(0.0, 0.5, 1.0), RegimeParams(0.0, 0.5, 1.0)],
            [[1.0, 0.0], [0.0, 1.0]],
        )
        assert "irreducibility" in [v.name for v in validate_model(spec)]

    def test_periodic_chain_flagged(self):
        spec = ModelSpec(
            [RegimeParams(0.0, 0.5, 1.0), RegimeParams(0.0, 0.5, 1.0)],
            [[0.0, 1.0], [1.0, 0.0]],
        )
        assert "aperiodicity" in [v.name for v in validate_model(spec)]

    def test_dimension_mismatch_is_structural(self):
        with pytest.raises(ModelValidationError):
            ModelSpec([RegimeParams(0.0, 0.5, 1.0)], [[0.5, 0.5], [0.5, 0.5]])

    @pytest.mark.parametrize(
        "spec_kwargs, expected",
        [
            (dict(sigma2=1e-6), "variance_bounds"),
            (dict(sigma2=1e5), "variance_bounds"),
            (dict(b=101.0), "parameter_box"),
            (dict(alpha=0.5, b=0.0), None),
        ],
    )
    def test_single_violation_specs(self, spec_kwargs, expected):
        spec = single_state(**spec_kwargs)
        names = [v.name for v in validate_model(spec)]
        if expected is None:
            assert names == []
        else:
            assert names == [expected]

    def test_row_sum_violation(self):
        spec = ModelSpec(
            [RegimeParams(0.0, 0.5, 1.0), RegimeParams(0.0, 0.4, 1.0)],
            [[0.6, 0.5], [0.5, 0.5]],
        )
        assert "row_stochastic" in [v.name for v in validate_model(spec)]

    def test_custom_bounds(self):
        spec = single_state(sigma2=0.5)
        assert validate_model(spec, ParameterBounds(c=0.6, d=10.0)) != []


class TestStationaryDistribution:
    def test_single_state(self):
        assert stationary_distribution([[1.0]]) == pytest.approx([1.0])

    def test_symmetric_two_state(self):
        lam = stationary_distribution([[0.5, 0.5], [0.5, 0.5]])
        assert lam == pytest.approx([0.5, 0.5], abs=1e-14)

    def test_hand_solved_two_state(self):
        # 0.1 lam_1 = 0.2 lam_2 with lam_1 + lam_2 = 1 gives (2/3, 1/3)
        lam = stationary_distribution([[0.9, 0.1], [0.2, 0.8]])
        assert lam == pytest.approx([2.0 / 3.0, 1.0 / 3.0], abs=1e-12)

    def test_reducible_raises(self):
        with pytest.raises(NoStationaryDistributionError):
            stationary_distribution([[1.0, 0.0], [0.0, 1.0]])

    def test_periodic_raises(self):
        with pytest.raises(NoStationaryDistributionError):
            stationary_distribution([[0.0, 1.0], [1.0, 0.0]])

    @given(seed=st.integers(min_value=0, max_value=10_000), m=st.integers(min_value=1, max_value=6))
    @settings(max_examples=60, deadline=None)
    def test_fixed_point_property(self, seed, m):
        rng = generator(seed)
        A = rng.dirichlet(np.full(m, 0.8), size=m)
        A = 0.99 * A + 0.01 / m  # keep the chain irreducible and aperiodic
        lam = stationary_distribution(A)
        assert np.max(np.abs(lam @ A - lam)) < 1e-10
        assert lam.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(lam > 0)


class TestStabilityIndex:
    def test_single_state_half(self):
        assert stability_index(single_state(alpha=0.5)) == pytest.approx(math.log(0.5))

    def test_unit_slopes_give_zero(self):
        spec = ModelSpec(
            [RegimeParams(0.0, 1.0, 1.0), RegimeParams(0.0, -1.0, 1.0)],
            [[0.5, 0.5], [0.5, 0.5]],
        )
        assert stability_index(spec) == pytest.approx(0.0, abs=1e-15)

    def test_weighted_mix(self):
        # lam = (2/3, 1/3), slopes (0.5, 1.5):
        # (2/3) log 0.5 + (1/3) log 1.5 = -0.3269430843372421
        spec = ModelSpec(
            [RegimeParams(0.0, 0.5, 1.0), RegimeParams(0.0, 1.5, 1.0)],
            [[0.9, 0.1], [0.2, 0.8]],
        )
        assert stability_index(spec) == pytest.approx(-0.3269430843372421, abs=1e-12)

    def test_zero_slope_sentinel(self):
        assert stability_index(single_state(alpha=0.0)) == -math.inf


class TestSimulate:
    def test_white_noise_degenerate_case(self):
        traj = simulate(single_state(alpha=0.0, b=0.0, sigma2=1.0), 10_000, y0=0.0, seed=7)
        n = traj.n
        assert abs(traj.y.mean()) < 3.0 / math.sqrt(n)
        assert abs(traj.y.var() - 1.0) < 3.0 * math.sqrt(2.0 / n)

    def test_determinism(self):
        spec = random_valid_spec(3, 2)
        a = simulate(spec, 500, y0=0.3, seed=42)
        b = simulate(spec, 500, y0=0.3, seed=42)
        assert np.array_equal(a.y, b.y) and np.array_equal(a.x, b.x)
        c = simulate(spec, 500, y0=0.3, seed=43)
        assert not np.array_equal(a.y, c.y)

    def test_symmetric_chain_state_frequencies(self):
        spec = ModelSpec(
            [RegimeParams(-1.0, 0.2, 1.0), RegimeParams(1.0, 0.2, 1.0)],
            [[0.9, 0.1], [0.1, 0.9]],
        )
        traj = simulate(spec, 10_000, y0=0.0, seed=1)
        freq = np.bincount(traj.x, minlength=2) / traj.n
        assert np.max(np.abs(freq - 0.5)) < 0.05

    def test_invalid_spec_rejected(self):
        with pytest.raises(ModelValidationError):
            simulate(single_state(alpha=1.0), 10)

    def test_residual_reconstruction_ks(self):
        spec = random_valid_spec(9, 2)
        traj = simulate(spec, 10_000, y0=0.0, seed=5)
        resid = (
            traj.y - spec.slopes[traj.x] * traj.lagged - spec.intercepts[traj.x]
        ) / np.sqrt(spec.variances[traj.x])
        assert abs(resid.mean()) < 3.0 / math.sqrt(traj.n)
        assert abs(resid.var() - 1.0) < 3.0 * math.sqrt(2.0 / traj.n)
        # 1% critical value of the one-sample Kolmogorov-Smirnov statistic
        assert stats.kstest(resid, "norm").statistic < 1.63 / math.sqrt(traj.n)


class TestPermuteSpec:
    def test_round_trip(self):
        spec = random_valid_spec(4, 3)
        perm = [2, 0, 1]
        back = permute_spec(permute_spec(spec, perm), np.argsort(perm))
        assert np.allclose(back.transition, spec.transition)
        assert back.regimes == spec.regimes


class TestTrajectory:
    def test_lagged_vector(self):
        traj = Trajectory(y0=5.0, y=np.array([1.0, 2.0, 3.0]))
        assert np.array_equal(traj.lagged, [5.0, 1.0, 2.0])

    def test_path_length_mismatch(self):
        with pytest.raises(ValueError):
            Trajectory(y0=0.0, y=np.array([1.0, 2.0]), x=np.array([0]))
