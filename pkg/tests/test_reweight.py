import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rockrelax.errors import InvalidInputError
from rockrelax.reweight import (
    ReweightConfig,
    WeightShift,
    auto_tune_gamma,
    blend_weights,
    check_kkt,
    partition_losses,
    reweight_objective,
    solve_reweight,
    tv_distance,
)


def random_shift(rng, n):
    """A random feasible shift: a probability vector minus uniform."""
    p = rng.dirichlet(np.ones(n))
    return WeightShift(p - 1.0 / n)


class TestPartition:
    def test_four_way_example(self):
        part = partition_losses([1, 2, 5, 9], 3.0)
        assert part.c_min == 1
        assert part.i_min.tolist() == [0]
        assert part.i_mid.tolist() == [1]
        assert part.i_big.tolist() == []
        assert part.chi.tolist() == [2, 3]

    def test_constant_losses_all_min(self):
        part = partition_losses([7, 7, 7], 0.5)
        assert part.i_min.tolist() == [0, 1, 2]
        assert part.i_mid.size == part.i_big.size == part.chi.size == 0

    def test_boundary_lands_in_big(self):
        part = partition_losses([0.0, 2.0], 2.0)
        assert part.i_min.tolist() == [0]
        assert part.i_big.tolist() == [1]
        assert part.chi.size == 0

    def test_partitions_all_indices(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            c = rng.uniform(0, 10, size=rng.integers(1, 20))
            part = partition_losses(c, rng.uniform(0.1, 5))
            combined = np.concatenate([part.i_min, part.i_mid, part.i_big, part.chi])
            assert sorted(combined.tolist()) == list(range(c.size))

    def test_scale_shift_equivariance(self):
        rng = np.random.default_rng(1)
        c = rng.uniform(0, 5, size=12)
        gamma = 1.3
        base = partition_losses(c, gamma)
        for alpha, beta in [(2.0, 0.0), (0.5, 3.0), (7.0, -1.0)]:
            other = partition_losses(alpha * c + beta, alpha * gamma)
            for a, b in zip((base.i_min, base.i_mid, base.i_big, base.chi),
                            (other.i_min, other.i_mid, other.i_big, other.chi)):
                assert a.tolist() == b.tolist()

    def test_rejects_bad_input(self):
        with pytest.raises(InvalidInputError):
            partition_losses([], 1.0)
        with pytest.raises(InvalidInputError):
            partition_losses([1.0, np.nan], 1.0)
        with pytest.raises(InvalidInputError):
            partition_losses([1.0], 0.0)


class TestSolveReweight:
    def test_worked_example(self):
        u = solve_reweight([1, 2, 5, 9], 3.0)
        np.testing.assert_allclose(u.shifts, [0.5, 0.0, -0.25, -0.25])
        assert reweight_objective([1, 2, 5, 9], u, 3.0) == pytest.approx(2.75, abs=1e-12)

    def test_constant_losses_no_reweighting(self):
        for gamma in (0.1, 1.0, 10.0):
            u = solve_reweight([7, 7, 7], gamma)
            assert np.all(u.shifts == 0)
            assert reweight_objective([7, 7, 7], u, gamma) == pytest.approx(7.0)

    def test_pruned_mass_split_over_minima(self):
        u = solve_reweight([0, 0, 10], 1.0)
        np.testing.assert_allclose(u.shifts, [1 / 6, 1 / 6, -1 / 3])
        np.testing.assert_allclose(u.weights(), [0.5, 0.5, 0.0])

    def test_noop_when_spread_below_gamma(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            c = rng.uniform(0, 1, size=8)
            gamma = (c.max() - c.min()) + 0.1
            assert np.all(solve_reweight(c, gamma).shifts == 0)

    def test_pruning_exactness(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            c = rng.uniform(0, 10, size=10)
            gamma = rng.uniform(0.5, 5)
            u = solve_reweight(c, gamma)
            part = partition_losses(c, gamma)
            assert np.all(u.shifts[part.chi] == -1.0 / c.size)
            assert np.all(u.shifts[part.i_mid] == 0.0)
            assert np.all(u.shifts[part.i_big] == 0.0)

    def test_feasibility(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            c = rng.uniform(0, 10, size=rng.integers(2, 15))
            u = solve_reweight(c, rng.uniform(0.1, 5))
            assert u.is_feasible()


class TestBlend:
    def test_mu_one_returns_u_star(self):
        rng = np.random.default_rng(5)
        u_prev, u_star = random_shift(rng, 6), random_shift(rng, 6)
        out = blend_weights(u_prev, u_star, 1.0)
        np.testing.assert_array_equal(out.shifts, u_star.shifts)

    def test_halfway_blend(self):
        u_prev = WeightShift.zero(4)
        u_star = WeightShift(np.array([0.5, 0.0, -0.25, -0.25]))
        out = blend_weights(u_prev, u_star, 0.5)
        np.testing.assert_allclose(out.shifts, [0.25, 0.0, -0.125, -0.125])

    @given(st.integers(2, 10), st.floats(0.01, 1.0), st.integers(0, 10_000))
    @settings(max_examples=100, deadline=None)
    def test_blend_stays_feasible(self, n, mu, seed):
        rng = np.random.default_rng(seed)
        out = blend_weights(random_shift(rng, n), random_shift(rng, n), mu)
        assert abs(out.shifts.sum()) <= 1e-12 * n
        assert np.all(out.shifts >= -1.0 / n - 1e-12)

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            blend_weights(WeightShift.zero(3), WeightShift.zero(4), 0.5)


class TestAutoTune:
    def test_quantile_example(self):
        c = np.arange(1, 9, dtype=float)
        gamma = auto_tune_gamma(c, 0.25)
        assert gamma == 5.0
        part = partition_losses(c, gamma)
        assert part.chi.tolist() == [6, 7]
        assert part.pruned_fraction == 0.25

    def test_zero_estimate(self):
        c = np.array([2.0, 4.0, 9.0])
        assert auto_tune_gamma(c, 0.0) == pytest.approx(7.0)
        assert partition_losses(c, 7.0).chi.size == 0

    def test_degenerate_returns_floor(self):
        gamma = auto_tune_gamma([5.0, 5.0, 5.0, 5.0], 0.5)
        assert 0 < gamma < 1e-6
        assert partition_losses([5.0, 5.0, 5.0, 5.0], gamma).pruned_fraction == 0.0

    def test_guarantee_pruned_fraction(self):
        rng = np.random.default_rng(6)
        for c_prime in (0.1, 0.25, 0.5):
            for _ in range(100):
                c = rng.uniform(0, 10, size=rng.integers(4, 40))
                if np.unique(c).size < c.size:
                    continue
                gamma = auto_tune_gamma(c, c_prime)
                assert partition_losses(c, gamma).pruned_fraction >= c_prime

    def test_rejects_bad_estimate(self):
        with pytest.raises(InvalidInputError):
            auto_tune_gamma([1.0, 2.0], 1.5)


class TestObjectiveAndTv:
    def test_zero_shift_gives_mean(self):
        c = np.array([3.0, 5.0, 7.0])
        assert reweight_objective(c, WeightShift.zero(3), 2.0) == pytest.approx(5.0)

    def test_tv_of_solution_equals_pruned_fraction(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            c = rng.uniform(0, 10, size=rng.integers(2, 12))
            gamma = rng.uniform(0.1, 5)
            u = solve_reweight(c, gamma)
            part = partition_losses(c, gamma)
            assert tv_distance(u) == pytest.approx(part.chi.size / c.size, abs=1e-12)

    def test_pruned_fraction_equals_tv_example(self):
        u = solve_reweight([1, 2, 5, 9], 3.0)
        assert tv_distance(u) == pytest.approx(0.5, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            reweight_objective([1.0, 2.0], WeightShift.zero(3), 1.0)


class TestKkt:
    def test_certifies_closed_form(self):
        assert check_kkt([1, 2, 5, 9], solve_reweight([1, 2, 5, 9], 3.0), 3.0)

    def test_zero_shift_in_wide_band(self):
        assert check_kkt([1.0, 2.0], WeightShift.zero(2), 5.0)

    def test_rejects_mass_toward_high_loss(self):
        u = WeightShift(np.array([-0.5, 0.5]))
        assert not check_kkt([1.0, 9.0], u, 3.0)

    def test_rejects_infeasible(self):
        assert not check_kkt([1.0, 2.0], WeightShift(np.array([1.0, 0.5])), 1.0)


class TestConfig:
    def test_validation(self):
        ReweightConfig(gamma=0.4, mu=0.5)
        ReweightConfig(gamma=1.0, mu=1.0, contamination_estimate=0.2)
        with pytest.raises(InvalidInputError):
            ReweightConfig(gamma=0.0)
        with pytest.raises(InvalidInputError):
            ReweightConfig(mu=0.0)
        with pytest.raises(InvalidInputError):
            ReweightConfig(contamination_estimate=1.5)
