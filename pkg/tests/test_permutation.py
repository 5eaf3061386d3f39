import itertools

import numpy as np
import pytest
from conftest import perm_matrix
from hypothesis import given, settings
from hypothesis import strategies as st

from srdiff.permutation import (
    InvalidSizeError,
    Permutation,
    accuracy_and_correctness,
    apply,
    compose,
    enumerate_all,
    identity,
    kendall_distance,
    kendall_tau,
    rank_of_coordinates,
)
from srdiff.softrank import lift_to_grid

perms = st.integers(2, 6).flatmap(lambda n: st.permutations(range(1, n + 1))).map(Permutation)


class TestIdentity:
    @pytest.mark.parametrize("n, ranks", [(3, (1, 2, 3)), (2, (1, 2)), (5, (1, 2, 3, 4, 5))])
    def test_values(self, n, ranks):
        assert identity(n).ranks == ranks

    def test_rejects_small(self):
        with pytest.raises(InvalidSizeError):
            identity(1)

    def test_permutation_rejects_non_bijection(self):
        with pytest.raises(ValueError):
            Permutation((1, 1, 3))


class TestRankOfCoordinates:
    def test_examples(self):
        assert rank_of_coordinates([0.3, 0.1, 0.9]).ranks == (2, 1, 3)
        assert rank_of_coordinates([0.0, 0.5, 1.0]).ranks == (1, 2, 3)

    def test_ties_by_index(self):
        z = [0.5, 0.5, 0.2]
        # pairwise-count oracle: smaller values, or equal values at a lower index
        expect = tuple(
            1 + sum(1 for j in range(3) if z[j] < z[i] or (z[j] == z[i] and j < i)) for i in range(3)
        )
        assert expect == (2, 3, 1)
        assert rank_of_coordinates(z).ranks == expect

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=8, unique=True))
    def test_sort_order_is_inverse(self, z):
        sigma = rank_of_coordinates(z)
        assert tuple(np.argsort(z) + 1) == sigma.inverse().ranks

    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=8, unique=True))
    def test_grid_round_trip_idempotent(self, z):
        sigma = rank_of_coordinates(z)
        assert rank_of_coordinates(lift_to_grid(sigma)) == sigma


class TestApplyCompose:
    def test_apply_examples(self):
        assert apply(Permutation((2, 1, 3)), ["a", "b", "c"]) == ["b", "a", "c"]
        assert apply(identity(3), ["a", "b", "c"]) == ["a", "b", "c"]

    def test_apply_matrix_oracle(self):
        sigma = Permutation((3, 1, 2))
        x = np.array([10.0, 20.0, 30.0])  # x, y, z
        assert list(perm_matrix(sigma.ranks) @ x) == [20.0, 30.0, 10.0]
        assert apply(sigma, ["x", "y", "z"]) == ["y", "z", "x"]

    def test_apply_length_mismatch(self):
        with pytest.raises(InvalidSizeError):
            apply(identity(3), [1, 2])

    def test_compose_examples(self):
        sigma = Permutation((3, 1, 4, 2))
        assert compose(sigma, identity(4)) == sigma
        assert compose(sigma, sigma.inverse()) == identity(4)

    def test_compose_matrix_oracle(self):
        a, b = Permutation((2, 1, 3)), Permutation((3, 1, 2))
        P = perm_matrix(a.ranks) @ perm_matrix(b.ranks)
        ranks = tuple(int(np.argmax(P[:, i])) + 1 for i in range(3))
        assert ranks == (3, 2, 1)
        assert compose(a, b).ranks == ranks

    def test_compose_size_mismatch(self):
        with pytest.raises(InvalidSizeError):
            compose(identity(2), identity(3))

    @settings(max_examples=200)
    @given(st.integers(2, 6).flatmap(lambda n: st.tuples(*[st.permutations(range(1, n + 1))] * 3)))
    def test_associative(self, triple):
        a, b, c = map(Permutation, triple)
        assert compose(compose(a, b), c) == compose(a, compose(b, c))

    @given(perms)
    def test_apply_respects_composition(self, sigma):
        other = Permutation(np.roll(np.arange(1, sigma.n + 1), 1))
        items = list(range(sigma.n))
        assert apply(compose(sigma, other), items) == apply(sigma, apply(other, items))


class TestKendall:
    def test_examples(self):
        truth = identity(3)
        assert kendall_tau(truth, truth) == 1.0
        assert kendall_tau(truth.reverse(), truth) == -1.0

    def test_single_discordant_pair(self):
        pred, truth = Permutation((1, 3, 2)), Permutation((1, 2, 3))
        pairs = list(itertools.combinations(range(3), 2))
        sign = lambda p, i, j: np.sign(p.ranks[i] - p.ranks[j])  # noqa: E731
        conc = sum(sign(pred, i, j) == sign(truth, i, j) for i, j in pairs)
        assert (conc, len(pairs) - conc) == (2, 1)
        assert kendall_tau(pred, truth) == pytest.approx(1 / 3, abs=1e-15)

    @pytest.mark.parametrize("n", range(2, 7))
    def test_exhaustive_extremes(self, n):
        for sigma in enumerate_all(n):
            assert kendall_tau(sigma, sigma) == 1.0
            assert kendall_tau(sigma, sigma.reverse()) == -1.0

    def test_distance_counts_inversions(self):
        assert kendall_distance(Permutation((2, 1, 3)), identity(3)) == 1
        assert kendall_distance(identity(4).reverse(), identity(4)) == 6

    def test_size_mismatch(self):
        with pytest.raises(InvalidSizeError):
            kendall_tau(identity(2), identity(3))


class TestAccuracyCorrectness:
    def test_examples(self):
        truth = identity(3)
        assert accuracy_and_correctness(truth, truth) == (1, 1.0)
        e, c = accuracy_and_correctness(Permutation((2, 1, 3)), truth)
        assert e == 0 and c == pytest.approx(1 / 3)
        assert accuracy_and_correctness(Permutation((2, 3, 1)), truth) == (0, 0.0)

    def test_size_mismatch(self):
        with pytest.raises(InvalidSizeError):
            accuracy_and_correctness(identity(2), identity(3))


class TestEnumerate:
    def test_small(self):
        assert set(enumerate_all(2)) == {Permutation((1, 2)), Permutation((2, 1))}
        assert len(list(enumerate_all(3))) == 6

    def test_n4_unique(self):
        all4 = list(enumerate_all(4))
        assert len(all4) == 24 and len(set(all4)) == 24

    def test_refuses_large(self):
        with pytest.raises(InvalidSizeError, match="refusing"):
            next(enumerate_all(9))
