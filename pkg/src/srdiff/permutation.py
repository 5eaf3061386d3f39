"""Exact permutation arithmetic and rank-based metrics.

A :class:`Permutation` is stored in rank (one-line) form with 1-based ranks:
``ranks[i]`` is the position that element ``i`` occupies after reordering.
The *sequence* form is the inverse view: the 0-based indices of the elements
listed in output order.
"""

from __future__ import annotations

import itertools
from collections.abc import Iterator, Sequence

import numpy as np

MAX_ENUMERATION = 8


class InvalidSizeError(ValueError):
    """Raised for sizes that violate a permutation contract."""


class Permutation:
    """Immutable bijection on {1, ..., N}, N >= 2, in rank form."""

    __slots__ = ("_ranks",)

    def __init__(self, ranks: Sequence[int]):
        r = tuple(int(x) for x in ranks)
        if len(r) < 2:
            raise InvalidSizeError(f"permutations need N >= 2, got N={len(r)}")
        if sorted(r) != list(range(1, len(r) + 1)):
            raise ValueError(f"{r} is not a bijection on 1..{len(r)}")
        self._ranks = r

    @classmethod
    def from_sequence(cls, order: Sequence[int]) -> Permutation:
        """Build from 0-based element indices listed in output order."""
        order = [int(x) for x in order]
        ranks = [0] * len(order)
        for pos, item in enumerate(order):
            ranks[item] = pos + 1
        return cls(ranks)

    @property
    def ranks(self) -> tuple[int, ...]:
        return self._ranks

    @property
    def n(self) -> int:
        return len(self._ranks)

    @property
    def sequence(self) -> tuple[int, ...]:
        """0-based element indices in output order (inverse of rank form)."""
        out = [0] * self.n
        for item, r in enumerate(self._ranks):
            out[r - 1] = item
        return tuple(out)

    def as_array(self) -> np.ndarray:
        """0-based ranks as an integer array."""
        return np.asarray(self._ranks, dtype=np.int64) - 1

    def inverse(self) -> Permutation:
        return Permutation([i + 1 for i in self.sequence])

    def reverse(self) -> Permutation:
        """The rank-reversed permutation: rank r becomes N + 1 - r."""
        return Permutation([self.n + 1 - r for r in self._ranks])

    def __len__(self) -> int:
        return self.n

    def __iter__(self):
        return iter(self._ranks)

    def __getitem__(self, i):
        return self._ranks[i]

    def __eq__(self, other) -> bool:
        if isinstance(other, Permutation):
            return self._ranks == other._ranks
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._ranks)

    def __repr__(self) -> str:
        return f"Permutation({self._ranks})"


def _check_same_size(a: Permutation, b: Permutation) -> None:
    if a.n != b.n:
        raise InvalidSizeError(f"size mismatch: {a.n} vs {b.n}")


def identity(n: int) -> Permutation:
    if n < 2:
        raise InvalidSizeError(f"n must be >= 2, got {n}")
    return Permutation(range(1, n + 1))


def rank_of_coordinates(z) -> Permutation:
    """Rank coordinates ascending; ties go to the lower index first."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size < 2:
        raise InvalidSizeError(f"need a vector with >= 2 entries, got shape {z.shape}")
    order = np.argsort(z, kind="stable")
    ranks = np.empty(z.size, dtype=np.int64)
    ranks[order] = np.arange(1, z.size + 1)
    return Permutation(ranks)


def apply(sigma: Permutation, items: Sequence):
    """Move element i to position sigma(i). Returns a list, or an array for array input."""
    if len(items) != sigma.n:
        raise InvalidSizeError(f"expected {sigma.n} items, got {len(items)}")
    if isinstance(items, np.ndarray):
        return items[list(sigma.sequence)]
    return [items[i] for i in sigma.sequence]


def compose(a: Permutation, b: Permutation) -> Permutation:
    """(a o b)(i) = a(b(i))."""
    _check_same_size(a, b)
    return Permutation([a.ranks[r - 1] for r in b.ranks])


def kendall_distance(a: Permutation, b: Permutation) -> int:
    """Number of discordant pairs (bubble-sort distance)."""
    _check_same_size(a, b)
    x, y = a.as_array(), b.as_array()
    dx = np.sign(x[:, None] - x[None, :])
    dy = np.sign(y[:, None] - y[None, :])
    return int(np.count_nonzero(np.triu(dx * dy < 0, k=1)))


def kendall_tau(pred: Permutation, truth: Permutation) -> float:
    """Tau-a between two rankings (no ties are possible)."""
    _check_same_size(pred, truth)
    n = pred.n
    pairs = n * (n - 1) // 2
    discordant = kendall_distance(pred, truth)
    return (pairs - 2 * discordant) / pairs


def accuracy_and_correctness(pred: Permutation, truth: Permutation) -> tuple[int, float]:
    """Exact-match indicator and fraction of elements with the correct rank."""
    _check_same_size(pred, truth)
    hits = sum(p == q for p, q in zip(pred.ranks, truth.ranks))
    return int(pred == truth), hits / pred.n


def enumerate_all(n: int) -> Iterator[Permutation]:
    """Yield every permutation of size n in lexicographic rank order."""
    if n > MAX_ENUMERATION:
        raise InvalidSizeError(
            f"refusing to enumerate {n}! permutations (limit n <= {MAX_ENUMERATION})"
        )
    if n < 2:
        raise InvalidSizeError(f"n must be >= 2, got {n}")
    for p in itertools.permutations(range(1, n + 1)):
        yield Permutation(p)


def random_permutation(n: int, rng: np.random.Generator) -> Permutation:
    return Permutation(rng.permutation(n) + 1)
