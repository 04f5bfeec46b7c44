import numpy as np
import pytest

from core.bernoulli_dist import ProbVector, sample_population
from core.environments import pattern_match_env
from core.fitness_shaping import (
    NaturalGradient,
    PopulationTooSmallError,
    ReturnBatch,
    centered_rank,
    natural_gradient_estimate,
    natural_gradient_from_bits,
)


# ============================================================================
# centered_rank
# ============================================================================

class TestCenteredRank:
    def test_by_hand(self):
        out = centered_rank([10, 50, 30, 20, 40])
        assert np.array_equal(out, [-0.5, 0.5, 0.0, -0.25, 0.25])

    def test_pair_tie(self):
        assert np.array_equal(centered_rank([7, 7]), [0.0, 0.0])

    def test_minimal_population(self):
        assert sorted(centered_rank([3.0, -1.0])) == [-0.5, 0.5]

    def test_ties_take_average_rank(self):
        out = centered_rank([3, 1, 3, 2])
        np.testing.assert_allclose(out, [1 / 3, -0.5, 1 / 3, -1 / 6], rtol=0, atol=1e-15)

    def test_affine_invariance(self, rng):
        raw = rng.normal(size=50)
        assert np.array_equal(centered_rank(raw), centered_rank(1000 * raw + 3))

    def test_monotone_invariance(self, rng):
        raw = rng.normal(size=50)
        assert np.array_equal(centered_rank(raw), centered_rank(np.exp(raw)))

    def test_sums_to_zero_and_bounded(self, rng):
        for _ in range(50):
            raw = rng.integers(0, 5, size=rng.integers(2, 40))
            out = centered_rank(raw)
            assert abs(out.sum()) < 1e-12
            assert out.min() >= -0.5 and out.max() <= 0.5

    def test_permutation_equivariant(self, rng):
        raw = rng.integers(0, 10, size=30).astype(float)
        perm = rng.permutation(30)
        assert np.array_equal(centered_rank(raw)[perm], centered_rank(raw[perm]))

    def test_rejects_single_member(self):
        with pytest.raises(PopulationTooSmallError, match="population too small to rank"):
            centered_rank([1.0])

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            centered_rank([1.0, float("nan")])


class TestReturnBatch:
    def test_from_raw(self):
        batch = ReturnBatch.from_raw([1.0, 3.0, 2.0])
        assert batch.mean == 2.0
        assert batch.max == 3.0
        assert np.array_equal(batch.shaped, [-0.5, 0.5, 0.0])


# ============================================================================
# natural_gradient_estimate
# ============================================================================

class TestNaturalGradient:
    def test_zero_weights_zero_gradient(self):
        rho = ProbVector.uniform(12)
        samples = sample_population(rho, 0, 0, 8)
        grad = natural_gradient_estimate(samples, np.zeros(8), rho)
        assert np.array_equal(grad.g, np.zeros(12))
        assert grad.energy == 0.0
        assert not grad.has_signal

    def test_energy_is_squared_norm(self, rng):
        g = rng.normal(size=20)
        grad = NaturalGradient.from_vector(g, pop_size=4)
        assert grad.energy == pytest.approx(float(np.sum(g * g)))

    def test_bit_identical_under_affine_returns(self, rng):
        rho = ProbVector(rng.uniform(0.1, 0.9, 16))
        samples = sample_population(rho, 1, 0, 32)
        raw = rng.normal(size=32)
        g1 = natural_gradient_estimate(samples, centered_rank(raw), rho).g
        g2 = natural_gradient_estimate(samples, centered_rank(7.5 * raw - 2), rho).g
        assert np.array_equal(g1, g2)

    def test_length_mismatch(self):
        rho = ProbVector.uniform(4)
        with pytest.raises(ValueError):
            natural_gradient_estimate(sample_population(rho, 0, 0, 3), np.zeros(4), rho)

    def test_separable_closed_form_value(self):
        env = pattern_match_env(1, target=[1])
        g = env.closed_form_natural_gradient(ProbVector(np.array([0.3])))
        assert g[0] == pytest.approx(0.21)

    def test_enumeration_matches_closed_form(self, rng):
        env = pattern_match_env(10, seed=3)
        rho = ProbVector(rng.uniform(0.1, 0.9, 10))
        assert np.allclose(env.exact_natural_gradient(rho),
                           env.closed_form_natural_gradient(rho), rtol=0, atol=1e-12)

    def test_monte_carlo_matches_enumeration(self, rng):
        d, n = 10, 100_000
        env = pattern_match_env(d, seed=5)
        rho = ProbVector(rng.uniform(0.2, 0.8, d))
        thetas = (rng.random((n, d)) < rho.probs).astype(np.float64)
        raw = -np.abs(thetas - env.target).sum(axis=1)

        est = natural_gradient_from_bits(thetas, raw, rho).g
        se = (raw[:, None] * (thetas - rho.probs)).std(axis=0) / np.sqrt(n)
        exact = env.exact_natural_gradient(rho)
        assert np.all(np.abs(est - exact) <= 3 * se)

    def test_sampled_population_estimator(self):
        d, n = 6, 20_000
        env = pattern_match_env(d, seed=1)
        rho = ProbVector.uniform(d, init=0.4)
        samples = sample_population(rho, 11, 0, n)
        raw = np.array([env.score_bits(s.bits) for s in samples])
        est = natural_gradient_estimate(samples, raw, rho).g
        thetas = np.stack([s.bits for s in samples]).astype(np.float64)
        se = (raw[:, None] * (thetas - rho.probs)).std(axis=0) / np.sqrt(n)
        assert np.all(np.abs(est - env.closed_form_natural_gradient(rho)) <= 3 * se)

    def test_single_coordinate_converges_to_closed_form(self):
        n = 100_000
        env = pattern_match_env(1, target=[1])
        rho = ProbVector(np.array([0.3]))
        samples = sample_population(rho, 2, 0, n)
        raw = np.array([env.score_bits(s.bits) for s in samples])
        est = natural_gradient_estimate(samples, raw, rho).g[0]
        bits = np.array([s.bits[0] for s in samples], dtype=np.float64)
        se = (raw * (bits - 0.3)).std() / np.sqrt(n)
        # rho (1 - rho) = 0.21
        assert abs(est - 0.21) <= 3 * se
