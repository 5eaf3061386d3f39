"""Forward corruption of training pairs and the minibatch training loop."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .kernels import ReverseKernelQuery, sample_reverse_step
from .models import Denoiser, ObservedBatch, OracleDenoiser, Parametrization
from .permutation import Permutation, rank_of_coordinates
from .softrank import (
    BridgeParams,
    lift_to_grid,
    riffle_shuffle,
    riffle_steps_for_time,
    sample_forward_marginal,
    sample_reference,
)

log = logging.getLogger(__name__)


class ForwardProcess(str, enum.Enum):
    SOFTRANK = "softrank"
    RIFFLE = "riffle"


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    batch_size: int = 32
    epochs: int = 100
    bridge: BridgeParams = field(default_factory=BridgeParams)
    seed: int = 0
    parametrization: Parametrization = Parametrization.SIGMA0
    forward: ForwardProcess = ForwardProcess.SOFTRANK
    riffle_k_max: int = 7

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning rate, batch size and epochs must be positive")
        object.__setattr__(self, "parametrization", Parametrization(self.parametrization))
        object.__setattr__(self, "forward", ForwardProcess(self.forward))


def observed_positions(sigma_t: Permutation) -> np.ndarray:
    """Observed position (0-based) of every original item."""
    return sigma_t.as_array()


def corrupt(
    items,
    sigma0: Permutation,
    config: TrainConfig,
    rng: np.random.Generator,
    step: int | None = None,
):
    """Draw one noisy observation of a training pair.

    Returns ``(observed_items, t, target)`` where ``target`` lists observed
    positions in the order of the supervision permutation: sigma_0 for the
    clean-prediction parametrization, or the state one grid step earlier.
    """
    items = _check_items(items)
    grid = config.bridge.time_grid
    K = len(grid) - 1
    k = int(rng.integers(1, K + 1)) if step is None else step
    t, s = grid[k], grid[k - 1]
    n = sigma0.n

    if config.forward is ForwardProcess.SOFTRANK:
        z0 = lift_to_grid(sigma0)
        z1 = sample_reference(config.bridge, n, rng)
        z_t = z1 if t >= 1.0 else sample_forward_marginal(z0, z1, t, config.bridge.eta, rng)
        sigma_t = rank_of_coordinates(z_t)
        if config.parametrization is Parametrization.SIGMA_PREV:
            q = ReverseKernelQuery(s, t, z_t, z0, z1, config.bridge.eta)
            supervision = rank_of_coordinates(sample_reverse_step(q, rng))
        else:
            supervision = sigma0
    else:
        k_s = riffle_steps_for_time(s, config.riffle_k_max)
        k_t = riffle_steps_for_time(t, config.riffle_k_max)
        sigma_s = riffle_shuffle(sigma0, k_s, rng)
        sigma_t = riffle_shuffle(sigma_s, k_t - k_s, rng)
        supervision = sigma_s if config.parametrization is Parametrization.SIGMA_PREV else sigma0

    pos = observed_positions(sigma_t)
    observed = items[list(sigma_t.sequence)]
    target = pos[list(supervision.sequence)]
    return observed, t, target


def corrupt_batch(dataset, config: TrainConfig, rng: np.random.Generator) -> ObservedBatch:
    obs, ts, targets = [], [], []
    for items, sigma0 in dataset:
        o, t, tgt = corrupt(items, sigma0, config, rng)
        obs.append(o)
        ts.append(t)
        targets.append(tgt)
    return ObservedBatch(np.stack(obs), np.array(ts), np.stack(targets))


def training_loss(model: Denoiser, batch, config: TrainConfig, rng: np.random.Generator):
    """Mean stagewise NLL over freshly corrupted ``(items, sigma0)`` pairs, with gradient."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    return model.loss_and_grad(corrupt_batch(batch, config, rng))


def _check_items(items) -> np.ndarray:
    items = np.asarray(items, dtype=float)
    return items[:, None] if items.ndim == 1 else items


def train(model: Denoiser, dataset, config: TrainConfig, rng: np.random.Generator | None = None):
    """Plain minibatch gradient descent; returns the model and per-epoch mean losses.

    ``dataset`` is a sequence of ``(items, sigma0)`` pairs with items of shape
    (N, F) in original order and ``sigma0`` in rank form.
    """
    if isinstance(model, OracleDenoiser):
        raise ValueError("the oracle has no parameters to train")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    data = [(_check_items(x), s) for x, s in dataset]
    for x, s in data:
        if x.shape[0] != model.n or s.n != model.n:
            raise ValueError(f"example of size {x.shape[0]} does not match model size {model.n}")
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(data))
        total, count = 0.0, 0
        for start in range(0, len(data), config.batch_size):
            chunk = [data[i] for i in order[start : start + config.batch_size]]
            loss, grad = training_loss(model, chunk, config, rng)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch starting {start}: loss={loss}, "
                    f"{int(np.sum(~np.isfinite(grad)))} non-finite gradient entries"
                )
            model.params -= config.lr * grad
            total += loss * len(chunk)
            count += len(chunk)
        trace.append(total / count)
        log.debug("epoch %d loss %.6f", epoch, trace[-1])
    return model, trace
