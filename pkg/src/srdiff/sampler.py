"""Reverse-time generation with reflected Gaussian-bridge updates."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .distributions import cgpl_sample
from .kernels import ReverseKernelQuery, sample_reverse_step
from .models import Denoiser, Parametrization
from .permutation import Permutation, kendall_distance, rank_of_coordinates
from .softrank import (
    BridgeParams,
    Reference,
    lift_to_grid,
    riffle_shuffle,
    riffle_steps_for_time,
    sample_reference,
)
from .training import ForwardProcess


@dataclass(frozen=True)
class SamplerConfig:
    bridge: BridgeParams
    model: Denoiser
    record_trajectory: bool = False
    forward: ForwardProcess = ForwardProcess.SOFTRANK
    parametrization: Parametrization = Parametrization.SIGMA0
    riffle_k_max: int = 7

    def __post_init__(self):
        if self.bridge.n_steps < 1:
            raise ValueError("sampler needs at least one step")
        object.__setattr__(self, "forward", ForwardProcess(self.forward))
        object.__setattr__(self, "parametrization", Parametrization(self.parametrization))


@dataclass(frozen=True)
class TrajectoryStep:
    k: int
    t: float
    z: tuple[float, ...]
    perm: Permutation
    sigma_hat0: Permutation | None

    def to_record(self) -> dict:
        return {
            "k": self.k,
            "t": self.t,
            "z": list(self.z),
            "perm": list(self.perm.ranks),
            "sigma_hat0": None if self.sigma_hat0 is None else list(self.sigma_hat0.ranks),
        }


def _as_items(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def sample_from_observed(model: Denoiser, X, sigma_t: Permutation, t: float, rng) -> Permutation:
    """Draw a permutation of the original items from the model at observation sigma_t.

    The model sees the items laid out by sigma_t and answers in observed
    positions; the answer is mapped back to original item indices.
    """
    X = _as_items(X)
    order = sigma_t.sequence
    observed = X[list(order)]
    pick, _ = cgpl_sample(model, observed, t, rng, n=len(order))
    return Permutation.from_sequence([order[j] for j in pick.sequence])


def reverse_step(model: Denoiser, X, t: float, s: float, z_t, z1, eta: float, rng):
    """One clean-prediction update: returns (z_s, sampled clean permutation)."""
    sigma_hat0 = sample_from_observed(model, X, rank_of_coordinates(z_t), t, rng)
    z0_hat = lift_to_grid(sigma_hat0)
    z_s = sample_reverse_step(ReverseKernelQuery(s, t, z_t, z0_hat, z1, eta), rng)
    return z_s, sigma_hat0


def predict_sigma_prev(model: Denoiser, X, t: float, s: float, z_t, z1, bridge: BridgeParams, rng) -> Permutation:
    """Permutation one step earlier, induced by a clean predictor and the bridge kernel."""
    z_s, _ = reverse_step(model, X, t, s, z_t, z1, bridge.eta, rng)
    return rank_of_coordinates(z_s)


def reverse_sample(X, config: SamplerConfig, rng: np.random.Generator):
    """Generate a permutation for instance ``X`` (items in original order).

    Returns ``(permutation, trajectory)``; the trajectory is ``None`` unless
    ``config.record_trajectory`` is set.
    """
    X = _as_items(X)
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least two items")
    if config.forward is ForwardProcess.SOFTRANK and config.parametrization is Parametrization.SIGMA0:
        return _softrank_sigma0(X, config, rng)
    return _discrete_chain(X, config, rng)


def _softrank_sigma0(X, config: SamplerConfig, rng):
    grid = config.bridge.time_grid
    K = len(grid) - 1
    z1 = sample_reference(config.bridge, X.shape[0], rng)
    z = z1
    traj = [] if config.record_trajectory else None
    if traj is not None:
        traj.append(TrajectoryStep(K, grid[K], tuple(z), rank_of_coordinates(z), None))
    for k in range(K, 0, -1):
        t, s = grid[k], grid[k - 1]
        z, sigma_hat0 = reverse_step(config.model, X, t, s, z, z1, config.bridge.eta, rng)
        if traj is not None:
            traj.append(TrajectoryStep(k - 1, s, tuple(z), rank_of_coordinates(z), sigma_hat0))
    return rank_of_coordinates(z), traj


def _discrete_chain(X, config: SamplerConfig, rng):
    """Permutation-valued reverse chain used by the ablation cells.

    The state is sigma_t itself. With the previous-state parametrization the
    model output is the next state; with clean prediction under riffle noise
    the predicted sigma_0 is re-shuffled to the noise level of time s.
    """
    grid = config.bridge.time_grid
    K = len(grid) - 1
    n = X.shape[0]
    if config.bridge.reference is Reference.GRID or config.forward is ForwardProcess.RIFFLE:
        sigma = Permutation(rng.permutation(n) + 1)
    else:
        sigma = rank_of_coordinates(sample_reference(config.bridge, n, rng))
    traj = [] if config.record_trajectory else None
    if traj is not None:
        traj.append(TrajectoryStep(K, grid[K], tuple(lift_to_grid(sigma)), sigma, None))
    for k in range(K, 0, -1):
        t, s = grid[k], grid[k - 1]
        pred = sample_from_observed(config.model, X, sigma, t, rng)
        if config.parametrization is Parametrization.SIGMA_PREV:
            sigma, hat0 = pred, None
        else:
            hat0 = pred
            sigma = riffle_shuffle(pred, riffle_steps_for_time(s, config.riffle_k_max), rng)
        if traj is not None:
            traj.append(TrajectoryStep(k - 1, s, tuple(lift_to_grid(sigma)), sigma, hat0))
    return sigma, traj


def instance_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for run ``index`` under base ``seed``."""
    return np.random.default_rng([seed, index])


def sample_many(instances, config: SamplerConfig, seed: int, threads: int = 1):
    """Run ``reverse_sample`` on every instance with per-instance RNG streams.

    Results do not depend on ``threads``.
    """
    def run(job):
        i, X = job
        return reverse_sample(X, config, instance_rng(seed, i))

    jobs = list(enumerate(instances))
    if threads <= 1:
        return [run(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, jobs))


def trajectory_jumpiness(trajectory) -> list[int]:
    """Kendall distance between consecutive permutations of a trajectory.

    Accepts :class:`TrajectoryStep` records, permutations, or soft-rank
    vectors.
    """
    perms = []
    for step in trajectory:
        if isinstance(step, TrajectoryStep):
            perms.append(step.perm)
        elif isinstance(step, Permutation):
            perms.append(step)
        else:
            perms.append(rank_of_coordinates(step))
    if len(perms) < 2:
        raise ValueError("trajectory needs at least two states")
    return [kendall_distance(a, b) for a, b in zip(perms, perms[1:])]

