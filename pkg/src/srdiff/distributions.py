"""PL, GPL and contextual GPL distributions over permutations.

Stagewise models pick one item per stage: stage ``i`` chooses the item placed
at output position ``i`` (sequence form). A score matrix has shape (N, N) with
``scores[k, i]`` the logit of item ``k`` at stage ``i``.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from typing import Protocol

import numpy as np

from .permutation import Permutation, enumerate_all

# Finite stand-in for -inf so that masked rows stay NaN-free.
MASK_VALUE = -1e30


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, achieved_tv: float):
        super().__init__(message)
        self.achieved_tv = achieved_tv


def logsumexp(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def log_softmax(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    y = x - m
    return y - np.log(np.sum(np.exp(y), axis=axis, keepdims=True))


def feasibility_mask(sequence: Sequence[int], n: int | None = None) -> np.ndarray:
    """{0, -inf} mask whose column i removes the items chosen before stage i."""
    sequence = list(sequence)
    n = len(sequence) if n is None else n
    mask = np.zeros((n, n))
    for i in range(n):
        mask[sequence[:i], i] = -np.inf
    return mask


def _finite_mask(sequence, n):
    m = feasibility_mask(sequence, n)
    m[np.isneginf(m)] = MASK_VALUE
    return m


def pl_log_prob(item_scores, sigma: Permutation) -> float:
    s = np.asarray(item_scores, dtype=float)
    seq = list(sigma.sequence)
    total = 0.0
    for i, k in enumerate(seq):
        total += s[k] - logsumexp(s[seq[i:]])
    return float(total)


def masked_stagewise_log_prob(scores, sigma: Permutation) -> float:
    scores = np.asarray(scores, dtype=float)
    seq = np.asarray(sigma.sequence)
    masked = scores + _finite_mask(seq, sigma.n)
    logp = log_softmax(masked, axis=0)
    return float(np.sum(logp[seq, np.arange(sigma.n)]))


def masked_stagewise_log_prob_grad(scores, sigma: Permutation) -> tuple[float, np.ndarray]:
    """Log-probability and its gradient with respect to the score matrix."""
    scores = np.asarray(scores, dtype=float)
    n = sigma.n
    seq = np.asarray(sigma.sequence)
    masked = scores + _finite_mask(seq, n)
    logp = log_softmax(masked, axis=0)
    grad = -np.exp(logp)
    grad[seq, np.arange(n)] += 1.0
    return float(np.sum(logp[seq, np.arange(n)])), grad


class StagewiseScorer(Protocol):
    """Produces stage logits over N items.

    Prefix-agnostic scorers (GPL) expose the whole matrix at once via
    ``static_scores``; contextual scorers (cGPL) only answer
    ``stage_scores`` for a concrete prefix.
    """

    prefix_agnostic: bool

    def stage_scores(self, items, prefix: Sequence[int], t: float) -> np.ndarray: ...

    def static_scores(self, items, t: float) -> np.ndarray: ...


class StaticScorer:
    """GPL scorer backed by a fixed score matrix."""

    prefix_agnostic = True

    def __init__(self, scores):
        self.scores = np.asarray(scores, dtype=float)

    def static_scores(self, items, t):
        return self.scores

    def stage_scores(self, items, prefix, t):
        return self.scores[:, len(prefix)]


class ContextualScorer:
    """cGPL scorer from a callable ``fn(items, prefix, t) -> logits``."""

    prefix_agnostic = False

    def __init__(self, fn):
        self.fn = fn

    def stage_scores(self, items, prefix, t):
        return np.asarray(self.fn(items, prefix, t), dtype=float)

    def static_scores(self, items, t):
        raise TypeError("contextual scorer has no static score matrix")


def _sample_categorical(logits: np.ndarray, rng: np.random.Generator) -> tuple[int, float]:
    logp = log_softmax(logits)
    p = np.exp(logp)
    k = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
    k = min(k, len(p) - 1)
    # rounding can land on a zero-probability tail entry
    while p[k] == 0.0:
        k -= 1
    return k, float(logp[k])


def cgpl_sample(scorer: StagewiseScorer, items, t: float, rng: np.random.Generator, n: int | None = None):
    """Draw a permutation stage by stage; returns it with its exact log-probability."""
    n = len(items) if n is None else n
    static = scorer.static_scores(items, t) if scorer.prefix_agnostic else None
    remaining = np.ones(n, dtype=bool)
    prefix: list[int] = []
    log_prob = 0.0
    for i in range(n):
        logits = static[:, i] if static is not None else scorer.stage_scores(items, prefix, t)
        masked = np.where(remaining, logits, MASK_VALUE)
        assert remaining.any(), "empty feasible set"
        k, lp = _sample_categorical(masked, rng)
        prefix.append(k)
        remaining[k] = False
        log_prob += lp
    return Permutation.from_sequence(prefix), log_prob


def contextual_log_prob(scorer: StagewiseScorer, items, t: float, sigma: Permutation) -> float:
    """Exact log-likelihood of ``sigma`` under a (possibly contextual) scorer."""
    if scorer.prefix_agnostic:
        return masked_stagewise_log_prob(scorer.static_scores(items, t), sigma)
    seq = list(sigma.sequence)
    total = 0.0
    for i, k in enumerate(seq):
        logits = np.array(scorer.stage_scores(items, seq[:i], t), dtype=float)
        logits[seq[:i]] = MASK_VALUE
        total += log_softmax(logits)[k]
    return float(total)


def biaffine_scores(enc, dec_state, W, u, v, b) -> np.ndarray:
    """Pointer logits d^T W e_k + u^T d + v^T e_k + b for every item k."""
    enc = np.asarray(enc, dtype=float)
    d = np.asarray(dec_state, dtype=float)
    W = np.asarray(W, dtype=float)
    if enc.ndim != 2 or W.shape != (d.size, enc.shape[1]) or len(u) != d.size or len(v) != enc.shape[1]:
        raise ValueError(
            f"width mismatch: enc {enc.shape}, dec {d.shape}, W {W.shape}, u {np.shape(u)}, v {np.shape(v)}"
        )
    return enc @ (W.T @ d) + float(np.dot(u, d)) + enc @ np.asarray(v, dtype=float) + float(b)


def distribution_table(scores, n: int) -> dict[Permutation, float]:
    return {sigma: float(np.exp(masked_stagewise_log_prob(scores, sigma))) for sigma in enumerate_all(n)}


def total_variation(p: Mapping[Permutation, float], q: Mapping[Permutation, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def fit_gpl_to_target(
    target: Mapping[Permutation, float],
    n: int,
    lr: float = 0.5,
    max_iters: int = 10_000,
    tol: float = 1e-3,
) -> np.ndarray:
    """Fit a static score matrix to a distribution over S_n by gradient descent.

    Minimizes the cross-entropy between ``target`` and the GPL model. Raises
    :class:`ConvergenceError` (carrying the achieved TV distance) when the
    tolerance is not reached.
    """
    if n > 4:
        raise ValueError("fit_gpl_to_target enumerates S_n and is limited to n <= 4")
    total = sum(target.values())
    if abs(total - 1.0) > 1e-9 or any(p < 0 for p in target.values()):
        raise ValueError(f"target must be a probability table, sums to {total}")
    support = [(sigma, p) for sigma, p in target.items() if p > 0]
    scores = np.zeros((n, n))
    tv = total_variation(distribution_table(scores, n), target)
    for _ in range(max_iters):
        if tv < tol:
            return scores
        grad = np.zeros_like(scores)
        for sigma, p in support:
            _, g = masked_stagewise_log_prob_grad(scores, sigma)
            grad -= p * g
        scores -= lr * grad
        tv = total_variation(distribution_table(scores, n), target)
    if tv < tol:
        return scores
    raise ConvergenceError(f"GPL fit stopped at TV={tv:.3e} after {max_iters} iterations", tv)
