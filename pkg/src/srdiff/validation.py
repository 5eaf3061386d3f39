"""Numerical validation of the bridge kernels, reflection and forward simulator.

Each check returns a :class:`Check` carrying the measured statistics, so the
same suite backs both the test-suite and ``srdiff validate-kernels``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import (
    ReverseKernelQuery,
    bridge_mean_var,
    joint_covariance,
    sample_reverse_step,
)
from .softrank import (
    BridgeParams,
    reflect,
    sample_forward_marginal,
    simulate_forward_path,
)


@dataclass
class Check:
    name: str
    passed: bool
    stats: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        stats = {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in self.stats.items()}
        return {"check": self.name, "passed": bool(self.passed), **stats}


def bounce(x: float) -> float:
    """Reflect into [0, 1] one boundary crossing at a time."""
    while x < 0.0 or x > 1.0:
        x = -x if x < 0.0 else 2.0 - x
    return x


def conditional_gaussian(s, t, eta, z_t, z0, z1):
    """Generic bivariate-Gaussian conditioning of z_s on z_t."""
    v_s, v_t, c, _ = joint_covariance(s, t, eta)
    mu_s = (1 - s) * z0 + s * z1
    mu_t = (1 - t) * z0 + t * z1
    return mu_s + (c / v_t) * (z_t - mu_t), v_s - c * c / v_t


def _random_times(rng, size):
    s = rng.uniform(0.01, 0.98, size)
    t = s + rng.uniform(0.005, 1.0, size) * (0.995 - s)
    return s, t


def check_identities(rng, count=1000, tol=1e-12) -> Check:
    s, t = _random_times(rng, count)
    eta = rng.uniform(0.05, 2.0, count)
    err_ratio = err_var = 0.0
    for si, ti, ei in zip(s, t, eta):
        v_s, v_t, c, _ = joint_covariance(si, ti, ei)
        err_ratio = max(err_ratio, abs(c / v_t - si / ti))
        err_var = max(err_var, abs(v_s - c * c / v_t - ei**2 * si * (ti - si) / ti))
    return Check(
        "covariance_identities",
        err_ratio <= tol and err_var <= tol,
        {"max_err_ratio": err_ratio, "max_err_var": err_var, "tol": tol, "count": count},
    )


def check_conditioning_oracle(rng, count=10_000, tol=1e-12) -> Check:
    s, t = _random_times(rng, count)
    eta = rng.uniform(0.05, 2.0, count)
    zs = rng.random((count, 3))
    err_mean = err_var = 0.0
    for si, ti, ei, (zt, z0, z1) in zip(s, t, eta, zs):
        mean, var = bridge_mean_var(ReverseKernelQuery(si, ti, np.array([zt]), np.array([z0]), np.array([z1]), ei))
        m_ref, v_ref = conditional_gaussian(si, ti, ei, zt, z0, z1)
        err_mean = max(err_mean, abs(mean[0] - m_ref))
        err_var = max(err_var, abs(var - v_ref))
    return Check(
        "conditioning_oracle",
        err_mean <= tol and err_var <= tol,
        {"max_err_mean": err_mean, "max_err_var": err_var, "tol": tol, "count": count},
    )


def check_chapman_kolmogorov_means(rng, count=1000, tol=1e-10) -> Check:
    worst = 0.0
    for _ in range(count):
        r, s, t = np.sort(rng.uniform(0.01, 0.99, 3))
        eta = rng.uniform(0.05, 2.0)
        z_t, z0, z1 = rng.random(3)
        m_s, _ = bridge_mean_var(ReverseKernelQuery(s, t, z_t, z0, z1, eta))
        m_rs, _ = bridge_mean_var(ReverseKernelQuery(r, s, m_s, z0, z1, eta))
        m_rt, _ = bridge_mean_var(ReverseKernelQuery(r, t, z_t, z0, z1, eta))
        worst = max(worst, abs(float(m_rs) - float(m_rt)))
    return Check("chapman_kolmogorov_means", worst <= tol, {"max_err": worst, "tol": tol})


def _moment_stats(x, mean_ref, var_ref):
    n = len(x)
    mean, var = float(np.mean(x)), float(np.var(x, ddof=1))
    se_mean = np.sqrt(var_ref / n)
    return {
        "mean": mean,
        "mean_ref": mean_ref,
        "mean_z": abs(mean - mean_ref) / se_mean,
        "var": var,
        "var_ref": var_ref,
        "var_rel_err": abs(var - var_ref) / var_ref,
    }


def check_reverse_kernel_mc(rng, eta=0.1, draws=100_000, s=0.25, t=0.5) -> Check:
    z = np.full(draws, 0.5)
    q = ReverseKernelQuery(s, t, z, z, z, eta)
    samples = sample_reverse_step(q, rng)
    mean_ref, var_ref = bridge_mean_var(ReverseKernelQuery(s, t, 0.5, 0.5, 0.5, eta))
    st = _moment_stats(samples, float(mean_ref), var_ref)
    return Check("reverse_kernel_monte_carlo", st["mean_z"] < 3 and st["var_rel_err"] < 0.1, st)


def _two_sample_stats(a, b):
    na, nb = len(a), len(b)
    va, vb = np.var(a, ddof=1), np.var(b, ddof=1)
    mean_z = abs(a.mean() - b.mean()) / np.sqrt(va / na + vb / nb)
    var_se = np.sqrt(2 * va**2 / (na - 1) + 2 * vb**2 / (nb - 1))
    return {
        "mean_a": float(a.mean()),
        "mean_b": float(b.mean()),
        "mean_z": float(mean_z),
        "var_a": float(va),
        "var_b": float(vb),
        "var_z": float(abs(va - vb) / var_se),
    }


def check_chapman_kolmogorov_mc(rng, eta=0.1, draws=100_000, r=0.2, s=0.45, t=0.7) -> Check:
    z_t, z0, z1 = 0.55, 0.4, 0.6
    full = lambda v: np.full(draws, v)  # noqa: E731
    mid = sample_reverse_step(ReverseKernelQuery(s, t, full(z_t), full(z0), full(z1), eta), rng)
    two = sample_reverse_step(ReverseKernelQuery(r, s, mid, full(z0), full(z1), eta), rng)
    one = sample_reverse_step(ReverseKernelQuery(r, t, full(z_t), full(z0), full(z1), eta), rng)
    st = _two_sample_stats(two, one)
    return Check("chapman_kolmogorov_monte_carlo", st["mean_z"] < 3 and st["var_z"] < 3, st)


def check_forward_reverse(rng, eta=0.1, draws=100_000, s=0.3, t=0.6) -> Check:
    z0, z1 = np.full(draws, 0.45), np.full(draws, 0.55)
    z_t = sample_forward_marginal(z0, z1, t, eta, rng)
    z_s = sample_reverse_step(ReverseKernelQuery(s, t, z_t, z0, z1, eta), rng)
    direct = sample_forward_marginal(z0, z1, s, eta, rng)
    st = _two_sample_stats(z_s, direct)
    st["var_ref"] = eta**2 * s * (1 - s)
    return Check("forward_reverse_consistency", st["mean_z"] < 3 and st["var_z"] < 3, st)


def check_forward_marginal_mc(rng, eta=0.1, draws=100_000, t=0.5) -> Check:
    z = np.full(draws, 0.5)
    x = sample_forward_marginal(z, z, t, eta, rng)
    st = _moment_stats(x, 0.5, eta**2 * t * (1 - t))
    return Check("forward_marginal_monte_carlo", st["mean_z"] < 3 and st["var_rel_err"] < 0.1, st)


def check_path_covariance(rng, eta=0.1, paths=100_000, n_steps=200, s=0.3, t=0.7) -> Check:
    params = BridgeParams.uniform_grid(eta, n_steps)
    z = np.full(paths, 0.5)
    path = simulate_forward_path(z, z, params, rng)
    grid = np.asarray(params.time_grid)
    i, j, h = (int(np.argmin(abs(grid - u))) for u in (s, t, 0.5))
    cov = float(np.cov(path[i], path[j])[0, 1])
    var_half = float(np.var(path[h], ddof=1))
    cov_ref, var_ref = eta**2 * s * (1 - t), eta**2 * 0.25
    st = {
        "cov": cov,
        "cov_ref": cov_ref,
        "cov_rel_err": abs(cov - cov_ref) / cov_ref,
        "var_half": var_half,
        "var_half_ref": var_ref,
        "var_rel_err": abs(var_half - var_ref) / var_ref,
        "in_domain": bool(np.all((path >= 0) & (path <= 1))),
    }
    ok = st["cov_rel_err"] < 0.1 and st["var_rel_err"] < 0.1 and st["in_domain"]
    return Check("forward_path_covariance", ok, st)


def check_reflection(rng, count=10_000, tol=1e-12) -> Check:
    x = rng.uniform(-10, 10, count)
    fast = reflect(x)
    slow = np.array([bounce(v) for v in x])
    err = float(np.max(np.abs(fast - slow)))
    return Check("reflection_vs_bounce", err <= tol, {"max_err": err, "tol": tol, "count": count})


def run_suite(seed: int = 0, eta: float = 0.1, draws: int = 100_000) -> list[Check]:
    """All identity and Monte-Carlo checks; ``eta`` drives the sampling checks."""
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    rng = np.random.default_rng(seed)
    return [
        check_identities(rng),
        check_conditioning_oracle(rng),
        check_chapman_kolmogorov_means(rng),
        check_reflection(rng),
        check_reverse_kernel_mc(rng, eta=eta, draws=draws),
        check_chapman_kolmogorov_mc(rng, eta=eta, draws=draws),
        check_forward_reverse(rng, eta=eta, draws=draws),
        check_forward_marginal_mc(rng, eta=eta, draws=draws),
        check_path_covariance(rng, eta=eta, paths=draws),
    ]
