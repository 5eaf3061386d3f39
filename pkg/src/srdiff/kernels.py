"""Closed-form reverse-time conditionals of the Brownian bridge."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .softrank import reflect

# Relative rounding slack tolerated before clamping a negative variance.
_VAR_CLAMP_RTOL = 1e-14


@dataclass(frozen=True)
class ReverseKernelQuery:
    """Step from time t back to s < t, given z_t, a clean estimate and z_1.

    ``s == 0`` is a valid degenerate query whose law is a point mass at
    ``z0_hat``.
    """

    s: float
    t: float
    z_t: np.ndarray
    z0_hat: np.ndarray
    z1: np.ndarray
    eta: float

    def __post_init__(self):
        if not (0.0 <= self.s < self.t <= 1.0):
            raise ValueError(f"need 0 <= s < t <= 1, got s={self.s}, t={self.t}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        for name in ("z_t", "z0_hat", "z1"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))


def interpolate(u: float, z0, z1):
    return (1.0 - u) * z0 + u * z1


def bridge_mean_var(q: ReverseKernelQuery) -> tuple[np.ndarray, float]:
    """Mean vector and shared scalar variance of z_s | z_t, z0_hat, z1."""
    if q.s == 0.0:
        return q.z0_hat.copy(), 0.0
    ratio = q.s / q.t
    mean = interpolate(q.s, q.z0_hat, q.z1) + ratio * (q.z_t - interpolate(q.t, q.z0_hat, q.z1))
    var = q.eta**2 * q.s * (q.t - q.s) / q.t
    if var < 0.0:
        if -var > _VAR_CLAMP_RTOL * q.eta**2:
            raise FloatingPointError(f"negative kernel variance {var}")
        var = 0.0
    return mean, var


def sample_reverse_step(q: ReverseKernelQuery, rng: np.random.Generator) -> np.ndarray:
    mean, var = bridge_mean_var(q)
    if var == 0.0:
        return reflect(mean)
    return reflect(mean + np.sqrt(var) * rng.standard_normal(mean.shape))


def joint_covariance(s: float, t: float, eta: float) -> tuple[float, float, float, float]:
    """(Var z_s, Var z_t, Cov(z_s, z_t), determinant) given the endpoints."""
    if not (0.0 < s < t < 1.0):
        raise ValueError(f"need 0 < s < t < 1, got s={s}, t={t}")
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    e2 = eta * eta
    v_s = e2 * s * (1.0 - s)
    v_t = e2 * t * (1.0 - t)
    c = e2 * s * (1.0 - t)
    return v_s, v_t, c, v_s * v_t - c * c
