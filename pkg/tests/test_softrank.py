import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srdiff.permutation import Permutation, enumerate_all, identity, rank_of_coordinates
from srdiff.softrank import (
    BridgeParams,
    Reference,
    lift_to_grid,
    reflect,
    riffle_shuffle_step,
    sample_forward_marginal,
    sample_reference,
    simulate_forward_path,
)
from srdiff.validation import bounce


def gsr_exact(n):
    """Exact one-step GSR law from the identity deck, by enumerating cuts and interleavings."""
    law = Counter()
    for cut in range(n + 1):
        p_cut = math.comb(n, cut) / 2**n
        slots = list(itertools.combinations(range(n), cut))
        for top_slots in slots:
            deck = [None] * n
            top, bottom = iter(range(cut)), iter(range(cut, n))
            for pos in range(n):
                deck[pos] = next(top) if pos in top_slots else next(bottom)
            law[Permutation.from_sequence(deck)] += p_cut / len(slots)
    return law


class TestLift:
    def test_identity3(self):
        np.testing.assert_array_equal(lift_to_grid(identity(3)), [0.0, 0.5, 1.0])

    def test_substitution(self):
        np.testing.assert_array_equal(lift_to_grid(Permutation((3, 1, 2))), [1.0, 0.0, 0.5])

    def test_identity5(self):
        np.testing.assert_array_equal(lift_to_grid(identity(5)), [0, 0.25, 0.5, 0.75, 1])

    @pytest.mark.parametrize("n", range(2, 7))
    def test_injective_and_round_trip(self, n):
        seen = set()
        for sigma in enumerate_all(n):
            z = lift_to_grid(sigma)
            seen.add(tuple(z))
            assert rank_of_coordinates(z) == sigma
        assert len(seen) == math.factorial(n)


class TestReflect:
    def test_examples(self):
        assert reflect(0.7) == 0.7
        assert reflect(-0.2) == pytest.approx(0.2, abs=1e-15)
        assert reflect(1.3) == pytest.approx(0.7, abs=1e-15)
        assert reflect(2.5) == pytest.approx(0.5, abs=1e-15)
        assert bounce(1.3) == pytest.approx(0.7) and bounce(2.5) == pytest.approx(0.5)

    def test_matches_bounce_oracle(self, rng):
        x = rng.uniform(-10, 10, 10_000)
        np.testing.assert_allclose(reflect(x), [bounce(v) for v in x], rtol=0, atol=1e-12)

    @given(st.floats(-1e6, 1e6))
    def test_idempotent_and_symmetric(self, x):
        y = reflect(x)
        assert 0.0 <= y <= 1.0
        assert reflect(y) == y
        assert reflect(-x) == pytest.approx(y, abs=1e-9)
        assert reflect(2 - x) == pytest.approx(y, abs=1e-9)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            reflect(float("nan"))


class TestBridgeParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            BridgeParams(eta=0.0)
        with pytest.raises(ValueError):
            BridgeParams(time_grid=(0.0, 0.5, 0.4, 1.0))
        with pytest.raises(ValueError):
            BridgeParams(time_grid=(0.1, 1.0))

    def test_uniform_grid(self):
        b = BridgeParams.uniform_grid(0.3, 4)
        assert b.time_grid == (0.0, 0.25, 0.5, 0.75, 1.0) and b.n_steps == 4


class TestReference:
    def test_uniform_support(self, rng):
        z = sample_reference(BridgeParams(reference=Reference.UNIFORM), 3, rng)
        assert z.shape == (3,) and np.all((z >= 0) & (z <= 1))

    def test_grid_support(self, rng):
        z = sample_reference(BridgeParams(reference=Reference.GRID), 3, rng)
        assert sorted(z) == [0.0, 0.5, 1.0]

    def test_uniform_moments(self, rng):
        params = BridgeParams()
        z = np.array([sample_reference(params, 3, rng) for _ in range(100_000)])
        np.testing.assert_allclose(z.mean(0), 0.5, atol=0.01)


class TestForwardPath:
    def test_zero_noise_is_linear(self, rng):
        params = BridgeParams.uniform_grid(1e-8, 100)
        z0, z1 = np.array([0.1, 0.9, 0.4]), np.array([0.8, 0.2, 0.4])
        path = simulate_forward_path(z0, z1, params, rng)
        t = np.asarray(params.time_grid)[:, None]
        assert np.max(np.abs(path - ((1 - t) * z0 + t * z1))) < 1e-3
        np.testing.assert_array_equal(path[-1], z1)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.05, 3.0))
    def test_stays_in_domain(self, seed, eta):
        rng = np.random.default_rng(seed)
        params = BridgeParams.uniform_grid(eta, 30)
        path = simulate_forward_path(rng.random(5), rng.random(5), params, rng)
        assert np.all((path >= 0) & (path <= 1))

    def test_midpoint_variance(self, rng):
        # reflection is inactive at this eta
        eta = 0.1
        params = BridgeParams.uniform_grid(eta, 200)
        z = np.full(10_000, 0.5)
        path = simulate_forward_path(z, z, params, rng)
        assert np.var(path[100], ddof=1) == pytest.approx(eta**2 * 0.25, rel=0.1)

    def test_covariance(self, rng):
        eta = 0.1
        params = BridgeParams.uniform_grid(eta, 200)
        z = np.full(100_000, 0.5)
        path = simulate_forward_path(z, z, params, rng)
        cov = np.cov(path[60], path[140])[0, 1]
        assert cov == pytest.approx(eta**2 * 0.3 * (1 - 0.7), rel=0.1)


class TestForwardMarginal:
    def test_endpoints(self, rng):
        z0, z1 = np.array([0.2, 0.7]), np.array([0.9, 0.1])
        np.testing.assert_allclose(sample_forward_marginal(z0, z1, 1e-12, 0.3, rng), z0, atol=1e-5)
        np.testing.assert_allclose(sample_forward_marginal(z0, z1, 1 - 1e-12, 0.3, rng), z1, atol=1e-5)

    def test_variance(self, rng):
        z = np.full(100_000, 0.5)
        x = sample_forward_marginal(z, z, 0.5, 0.1, rng)
        assert np.var(x, ddof=1) == pytest.approx(0.0025, rel=0.1)

    @pytest.mark.parametrize("t", [0.0, 1.0, -0.1])
    def test_domain(self, rng, t):
        with pytest.raises(ValueError):
            sample_forward_marginal([0.5, 0.5], [0.5, 0.5], t, 0.3, rng)


class TestRiffle:
    def test_exact_law_n2(self):
        law = gsr_exact(2)
        assert law[Permutation((2, 1))] == pytest.approx(0.25)

    def test_swap_frequency_n2(self, rng):
        draws = 40_000
        swaps = sum(riffle_shuffle_step(identity(2), rng) == Permutation((2, 1)) for _ in range(draws))
        assert abs(swaps / draws - 0.25) < 3 * math.sqrt(0.25 * 0.75 / draws)

    def test_single_step_matches_enumeration_n3(self, rng):
        law = gsr_exact(3)
        draws = 30_000
        counts = Counter(riffle_shuffle_step(identity(3), rng) for _ in range(draws))
        for sigma in enumerate_all(3):
            p = law.get(sigma, 0.0)
            tol = 3 * math.sqrt(max(p * (1 - p), 1e-12) / draws) + 1e-9
            assert abs(counts[sigma] / draws - p) <= tol

    def test_degenerate_cut_is_identity(self):
        class Fixed:
            def __init__(self, cut):
                self.cut = cut

            def binomial(self, n, p):
                return self.cut

            def random(self):
                return 0.5

        for cut in (0, 4):
            sigma = Permutation((2, 4, 1, 3))
            assert riffle_shuffle_step(sigma, Fixed(cut)) == sigma

    def test_mixes_to_uniform(self, rng):
        chains = 100_000
        counts = Counter()
        for _ in range(chains):
            sigma = identity(4)
            for _ in range(10):
                sigma = riffle_shuffle_step(sigma, rng)
            counts[sigma] += 1
        tv = 0.5 * sum(abs(counts[s] / chains - 1 / 24) for s in enumerate_all(4))
        assert tv < 0.02
