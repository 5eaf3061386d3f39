"""Soft-rank lifting, reflection, and the reflected forward bridge.

Soft-rank vectors are plain float arrays with entries in [0, 1]; each
coordinate is the continuous position of one element.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .permutation import InvalidSizeError, Permutation, random_permutation


class Reference(str, enum.Enum):
    UNIFORM = "uniform"  # i.i.d. Uniform[0, 1] coordinates
    GRID = "grid"  # canonical grid under a uniformly random permutation


@dataclass(frozen=True)
class BridgeParams:
    """Noise scale, time grid and reference distribution of the bridge."""

    eta: float = 0.3
    time_grid: tuple[float, ...] = tuple(np.linspace(0.0, 1.0, 21))
    reference: Reference = Reference.UNIFORM

    def __post_init__(self):
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be positive, got {self.eta}")
        grid = np.asarray(self.time_grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("time grid needs at least two points")
        if grid[0] != 0.0 or grid[-1] != 1.0:
            raise ValueError("time grid must start at 0 and end at 1")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("time grid must be strictly increasing")
        object.__setattr__(self, "time_grid", tuple(float(t) for t in grid))
        object.__setattr__(self, "reference", Reference(self.reference))

    @classmethod
    def uniform_grid(cls, eta: float = 0.3, n_steps: int = 20, reference=Reference.UNIFORM):
        if n_steps < 1:
            raise ValueError(f"need at least one step, got {n_steps}")
        grid = np.linspace(0.0, 1.0, n_steps + 1)
        grid[-1] = 1.0
        return cls(eta=eta, time_grid=tuple(grid), reference=Reference(reference))

    @property
    def n_steps(self) -> int:
        return len(self.time_grid) - 1


def lift_to_grid(sigma: Permutation) -> np.ndarray:
    """Place element i at grid point (sigma(i) - 1) / (N - 1)."""
    return sigma.as_array() / (sigma.n - 1)


def reflect(x):
    """Fold the real line onto [0, 1] (triangle wave with period 2)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("reflect() needs finite input")
    y = np.mod(x, 2.0)
    out = np.where(y > 1.0, 2.0 - y, y)
    return float(out) if out.ndim == 0 else out


def sample_reference(params: BridgeParams, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 2:
        raise InvalidSizeError(f"n must be >= 2, got {n}")
    if params.reference is Reference.UNIFORM:
        return rng.random(n)
    return lift_to_grid(random_permutation(n, rng))


def simulate_forward_path(z0, z1, params: BridgeParams, rng: np.random.Generator) -> np.ndarray:
    """Euler-Maruyama path of the reflected bridge, one row per grid time.

    The last step is a deterministic pin to ``z1``; the drift is never
    evaluated at t = 1.
    """
    z0 = np.asarray(z0, dtype=float)
    z1 = np.asarray(z1, dtype=float)
    grid = params.time_grid
    path = np.empty((len(grid),) + z0.shape)
    path[0] = z0
    z = z0.copy()
    for k in range(len(grid) - 1):
        t, t_next = grid[k], grid[k + 1]
        if t_next >= 1.0:
            z = z1.copy()
        else:
            dt = t_next - t
            drift = (z1 - z) / (1.0 - t)
            z = reflect(z + dt * drift + params.eta * np.sqrt(dt) * rng.standard_normal(z.shape))
        path[k + 1] = z
    return path


def sample_forward_marginal(z0, z1, t: float, eta: float, rng: np.random.Generator) -> np.ndarray:
    """Reflected draw from the unconstrained bridge marginal at time t."""
    if not 0.0 < t < 1.0:
        raise ValueError(f"t must lie in (0, 1), got {t}")
    z0 = np.asarray(z0, dtype=float)
    z1 = np.asarray(z1, dtype=float)
    mean = (1.0 - t) * z0 + t * z1
    std = eta * np.sqrt(t * (1.0 - t))
    return reflect(mean + std * rng.standard_normal(mean.shape))


def riffle_shuffle_step(sigma: Permutation, rng: np.random.Generator) -> Permutation:
    """One Gilbert-Shannon-Reeds shuffle of the deck ``sigma.sequence``."""
    deck = sigma.sequence
    n = len(deck)
    cut = int(rng.binomial(n, 0.5))
    top, bottom = list(deck[:cut]), list(deck[cut:])
    out = []
    i = j = 0
    while i < len(top) or j < len(bottom):
        a, b = len(top) - i, len(bottom) - j
        if rng.random() * (a + b) < a:
            out.append(top[i])
            i += 1
        else:
            out.append(bottom[j])
            j += 1
    return Permutation.from_sequence(out)


def riffle_steps_for_time(t: float, k_max: int = 7) -> int:
    """Number of GSR shuffles used to corrupt up to time t."""
    return int(round(t * k_max))


def riffle_shuffle(sigma: Permutation, steps: int, rng: np.random.Generator) -> Permutation:
    for _ in range(steps):
        sigma = riffle_shuffle_step(sigma, rng)
    return sigma
