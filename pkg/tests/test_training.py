import itertools
import math
from collections import Counter

import numpy as np
import pytest
from scipy import integrate, stats

from srdiff.distributions import cgpl_sample
from srdiff.models import MLPDenoiser, OracleDenoiser, Parametrization, TabularDenoiser
from srdiff.permutation import Permutation, kendall_tau, rank_of_coordinates
from srdiff.sampler import predict_sigma_prev
from srdiff.softrank import BridgeParams, lift_to_grid
from srdiff.tasks import generate_dataset
from srdiff.training import (
    ForwardProcess,
    TrainConfig,
    TrainingDiverged,
    corrupt,
    corrupt_batch,
    train,
    training_loss,
)

POINT_MASS = Permutation((1, 3, 2))
ITEMS3 = np.array([0.2, 0.9, 0.5])


def reflected_normal_pdf(x, mean, sd, images=6):
    ks = np.arange(-images, images + 1)
    return sum(stats.norm.pdf(x, 2 * k + mean, sd) + stats.norm.pdf(x, 2 * k - mean, sd) for k in ks)


def reflected_normal_cdf(x, mean, sd, images=6):
    ks = np.arange(-images, images + 1)
    return sum(
        stats.norm.cdf(x, 2 * k + mean, sd) - stats.norm.cdf(0, 2 * k + mean, sd)
        + stats.norm.cdf(x, 2 * k - mean, sd) - stats.norm.cdf(0, 2 * k - mean, sd)
        for k in ks
    )


def ordering_probability(seq, means, sd):
    """P(z_a < z_b < z_c) for independent reflected normals, by quadrature over the middle one."""
    a, b, c = seq

    def integrand(y):
        return (
            reflected_normal_pdf(y, means[b], sd)
            * reflected_normal_cdf(y, means[a], sd)
            * (1 - reflected_normal_cdf(y, means[c], sd))
        )

    return integrate.quad(integrand, 0, 1, limit=200)[0]


def point_mass_run(seed=0, epochs=500):
    model = TabularDenoiser(3, 10)
    data = [(ITEMS3, POINT_MASS)] * 32
    config = TrainConfig(lr=20.0, batch_size=16, epochs=epochs, bridge=BridgeParams.uniform_grid(0.3, 10), seed=seed)
    return train(model, data, config)


class TestCorrupt:
    def test_observed_is_reordering(self, rng):
        items = rng.random((5, 2))
        sigma0 = Permutation((2, 5, 1, 3, 4))
        obs, t, target = corrupt(items, sigma0, TrainConfig(), rng)
        assert 0 < t <= 1
        assert sorted(map(tuple, obs)) == sorted(map(tuple, items))
        # target positions point at the sigma0 sequence inside the observed layout
        np.testing.assert_array_equal(obs[target], items[list(sigma0.sequence)])

    def test_early_step_keeps_order(self, rng):
        bridge = BridgeParams.uniform_grid(1e-6, 20)
        items = np.arange(5.0)[:, None]
        sigma0 = Permutation((4, 2, 5, 1, 3))
        obs, _, target = corrupt(items, sigma0, TrainConfig(bridge=bridge), rng, step=1)
        np.testing.assert_array_equal(target, np.arange(5))

    @pytest.mark.parametrize("forward", list(ForwardProcess))
    @pytest.mark.parametrize("param", list(Parametrization))
    def test_every_cell_produces_valid_targets(self, rng, forward, param):
        config = TrainConfig(forward=forward, parametrization=param)
        batch = corrupt_batch([(rng.random((4, 1)), Permutation((3, 1, 4, 2)))] * 6, config, rng)
        assert all(sorted(row) == [0, 1, 2, 3] for row in batch.targets)

    def test_riffle_at_time_zero_step_is_clean(self, rng):
        config = TrainConfig(forward="riffle", bridge=BridgeParams.uniform_grid(0.3, 20))
        # t = 0.05 rounds to zero shuffles
        sigma0 = Permutation((2, 1, 4, 3))
        obs, _, target = corrupt(np.arange(4.0)[:, None], sigma0, config, rng, step=1)
        np.testing.assert_array_equal(obs[:, 0], sigma0.sequence)
        np.testing.assert_array_equal(target, np.arange(4))


class TestTrainingLoss:
    def test_empty_batch(self, rng):
        with pytest.raises(ValueError):
            training_loss(MLPDenoiser(3), [], TrainConfig(), rng)

    def test_zero_init_value(self, rng):
        loss, grad = training_loss(MLPDenoiser(3), [(ITEMS3, POINT_MASS)] * 4, TrainConfig(), rng)
        assert loss == pytest.approx(math.log(6), abs=1e-6)
        assert grad.shape == MLPDenoiser(3).params.shape

    def test_oracle_loss_vanishes(self, rng):
        data = [(x, rank_of_coordinates(x)) for x in rng.random((8, 5))]
        batch = corrupt_batch([(x[:, None], s) for x, s in data], TrainConfig(), rng)
        assert OracleDenoiser(5).loss(batch) < 1e-6


class TestTrain:
    def test_point_mass_converges(self):
        model, trace = point_mass_run()
        assert trace[-1] < 0.05
        # per-stage probability of the correct item, averaged over forward corruptions
        rng = np.random.default_rng(1)
        config = TrainConfig(bridge=BridgeParams.uniform_grid(0.3, 10))
        probs = []
        for _ in range(500):
            obs, t, target = corrupt(ITEMS3, POINT_MASS, config, rng)
            for i in range(3):
                logits = model.stage_scores(obs, list(target[:i]), t)
                logits[list(target[:i])] = -np.inf
                p = np.exp(logits - logits.max())
                probs.append(p[target[i]] / p.sum())
        assert np.mean(probs) > 0.99

    def test_moving_average_trend(self):
        _, trace = point_mass_run()
        ma = np.convolve(trace, np.ones(10) / 10, mode="valid")
        # epoch losses are Monte-Carlo estimates over fresh corruptions
        assert np.max(np.diff(ma)) < 0.01
        assert ma[-1] < ma[0] / 20

    def test_bitwise_reproducible(self):
        m1, t1 = point_mass_run(seed=7, epochs=30)
        m2, t2 = point_mass_run(seed=7, epochs=30)
        assert t1 == t2
        assert m1.params.tobytes() == m2.params.tobytes()

    def test_rejects_oracle(self):
        with pytest.raises(ValueError):
            train(OracleDenoiser(3), [(ITEMS3, POINT_MASS)], TrainConfig())

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            train(MLPDenoiser(4), [(ITEMS3, POINT_MASS)], TrainConfig())

    def test_divergence_aborts(self):
        model = MLPDenoiser(3)
        model.params[:] = np.nan
        with pytest.raises(TrainingDiverged):
            train(model, [(ITEMS3, POINT_MASS)], TrainConfig(epochs=1))

    @pytest.mark.slow
    def test_mlp_learns_sorting(self):
        ds = generate_dataset("sorting", 5, 2000, seed=3)
        held = generate_dataset("sorting", 5, 200, seed=4)
        config = TrainConfig(lr=0.1, epochs=50, seed=0)
        model, _ = train(MLPDenoiser(5, seed=0), ds.training_pairs(), config)
        rng = np.random.default_rng(0)
        taus = []
        for inst in held.instances:
            # grid step 2 is t = 0.1
            obs, t, target = corrupt(inst.features(), inst.ground_truth, config, rng, step=2)
            pred, _ = cgpl_sample(model, obs, t, rng)
            taus.append(kendall_tau(pred, Permutation.from_sequence(target)))
        assert np.mean(taus) > 0.9


class TestPredictSigmaPrev:
    def test_oracle_at_time_zero(self, rng):
        x = rng.random(5)
        truth = rank_of_coordinates(x)
        for _ in range(20):
            z_t, z1 = rng.random(5), rng.random(5)
            out = predict_sigma_prev(OracleDenoiser(5), x, 0.3, 0.0, z_t, z1, BridgeParams(), rng)
            assert out == truth

    def test_deterministic_limit(self, rng):
        x = np.array([0.4, 0.1, 0.8, 0.3])
        z0 = lift_to_grid(rank_of_coordinates(x))
        z1, z_t = rng.random(4), rng.random(4)
        s, t = 0.3, 0.6
        mean = (1 - s) * z0 + s * z1 + (s / t) * (z_t - ((1 - t) * z0 + t * z1))
        out = predict_sigma_prev(OracleDenoiser(4), x, t, s, z_t, z1, BridgeParams(eta=1e-9), rng)
        if np.all((mean > 0) & (mean < 1)):
            assert out == rank_of_coordinates(mean)

    def test_distribution_matches_quadrature(self, rng):
        x = np.array([0.3, 0.1, 0.2])
        z0 = lift_to_grid(rank_of_coordinates(x))
        z_t, z1 = np.array([0.45, 0.55, 0.5]), np.array([0.2, 0.7, 0.4])
        s, t, eta = 0.25, 0.5, 0.3
        means = (1 - s) * z0 + s * z1 + (s / t) * (z_t - ((1 - t) * z0 + t * z1))
        sd = eta * math.sqrt(s * (t - s) / t)
        draws = 30_000
        counts = Counter(
            predict_sigma_prev(OracleDenoiser(3), x, t, s, z_t, z1, BridgeParams(eta=eta), rng) for _ in range(draws)
        )
        total = 0.0
        for seq in itertools.permutations(range(3)):
            p = ordering_probability(seq, means, sd)
            total += p
            f = counts[Permutation.from_sequence(seq)] / draws
            assert abs(f - p) <= 3 * math.sqrt(max(p * (1 - p), 1e-12) / draws) + 1e-6
        assert total == pytest.approx(1.0, abs=1e-8)
