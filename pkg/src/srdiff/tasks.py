"""Desk-scale benchmark tasks: scalar sorting and small Euclidean TSP."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .permutation import InvalidSizeError, Permutation, rank_of_coordinates

GENERATOR_VERSION = 1
DATASET_SCHEMA = "srdiff-dataset"
MAX_EXACT_TSP = 9


@dataclass(frozen=True)
class SortingInstance:
    values: np.ndarray
    ground_truth: Permutation

    def features(self) -> np.ndarray:
        """Per-instance min-max normalized values, shape (N, 1)."""
        v = self.values
        span = v.max() - v.min()
        return ((v - v.min()) / span)[:, None]


@dataclass(frozen=True)
class TSPInstance:
    """Cities in [0, 1]^2; ``optimal_tour`` is a visit order (one-line tuple of city ids)."""

    points: np.ndarray
    optimal_tour: Permutation | None = None
    optimal_length: float | None = None

    def features(self) -> np.ndarray:
        return self.points

    @property
    def ground_truth(self) -> Permutation | None:
        """Rank form of the optimal tour: rank of city i is its visit position."""
        return None if self.optimal_tour is None else self.optimal_tour.inverse()


def sorting_instance(values) -> SortingInstance:
    values = np.asarray(values, dtype=float)
    return SortingInstance(values, rank_of_coordinates(values))


def _visit_order(tour) -> np.ndarray:
    if isinstance(tour, Permutation):
        return np.asarray(tour.ranks) - 1
    return np.asarray(tour, dtype=int)


def tour_length(instance: TSPInstance, tour) -> float:
    """Closed tour length; ``tour`` lists city ids (1-based Permutation) in visit order."""
    order = _visit_order(tour)
    pts = instance.points
    if len(order) != len(pts):
        raise InvalidSizeError(f"tour of size {len(order)} for {len(pts)} cities")
    seg = pts[order] - pts[np.roll(order, -1)]
    return float(np.sqrt((seg**2).sum(-1)).sum())


def _tour_lengths(points: np.ndarray, tours: np.ndarray) -> np.ndarray:
    p = points[tours]
    seg = p - np.roll(p, -1, axis=1)
    return np.sqrt((seg**2).sum(-1)).sum(-1)


def canonical_tour(order) -> Permutation:
    """Rotate to start at city 1 and orient so the second city id is below the last."""
    order = [int(x) for x in _visit_order(order)]
    i = order.index(0)
    order = order[i:] + order[:i]
    if order[1] > order[-1]:
        order = [order[0]] + order[1:][::-1]
    return Permutation([c + 1 for c in order])


def exact_tsp(instance: TSPInstance) -> tuple[Permutation, float]:
    """Exhaustive search over (N-1)!/2 tours starting at city 1."""
    n = len(instance.points)
    if n > MAX_EXACT_TSP:
        raise InvalidSizeError(f"exact TSP limited to N <= {MAX_EXACT_TSP}, got {n}")
    if n < 3:
        order = list(range(n))
        return Permutation([c + 1 for c in order]), tour_length(instance, order)
    rest = [p for p in itertools.permutations(range(1, n)) if p[0] < p[-1]]
    tours = np.column_stack([np.zeros(len(rest), dtype=int), np.array(rest)])
    lengths = _tour_lengths(instance.points, tours)
    best = int(np.argmin(lengths))
    return Permutation(tours[best] + 1), float(lengths[best])


def naive_tsp(instance: TSPInstance) -> tuple[Permutation, float]:
    """Full N! enumeration without symmetry pruning (reference oracle)."""
    n = len(instance.points)
    if n > 8:
        raise InvalidSizeError("naive TSP limited to N <= 8")
    tours = np.array(list(itertools.permutations(range(n))))
    lengths = _tour_lengths(instance.points, tours)
    best = int(np.argmin(lengths))
    return Permutation(tours[best] + 1), float(lengths[best])


def nearest_neighbor_tour(instance: TSPInstance, start: int = 0) -> Permutation:
    pts = instance.points
    n = len(pts)
    left = set(range(n)) - {start}
    order = [start]
    while left:
        here = pts[order[-1]]
        nxt = min(left, key=lambda j: (float(np.sum((pts[j] - here) ** 2)), j))
        order.append(nxt)
        left.remove(nxt)
    return Permutation([c + 1 for c in order])


def optimality_gap(pred_length: float, opt_length: float) -> float:
    if not opt_length > 0:
        raise ValueError(f"optimal length must be positive, got {opt_length}")
    return (pred_length - opt_length) / opt_length


def _distinct_uniform(rng, shape) -> np.ndarray:
    while True:
        x = rng.random(shape)
        flat = x.reshape(shape[0], -1) if len(shape) > 1 else x
        if len(np.unique(flat, axis=0)) == shape[0]:
            return x


@dataclass
class Dataset:
    kind: str
    n: int
    seed: int
    instances: list

    def training_pairs(self):
        """(features, rank-form target) pairs for the denoiser."""
        return [(inst.features(), inst.ground_truth) for inst in self.instances]

    def header(self) -> dict:
        return {
            "schema": DATASET_SCHEMA,
            "generator_version": GENERATOR_VERSION,
            "kind": self.kind,
            "n": self.n,
            "count": len(self.instances),
            "seed": self.seed,
        }


def generate_dataset(kind: str, n: int, count: int, seed: int, labels: bool = True) -> Dataset:
    """Reproducible synthetic instances; TSP gets exact labels when n <= 9."""
    if n < 2 or count < 0:
        raise InvalidSizeError(f"invalid dataset size n={n}, count={count}")
    if kind == "tsp" and n < 3:
        raise InvalidSizeError("TSP needs at least 3 cities")
    if kind not in ("sorting", "tsp"):
        raise ValueError(f"unknown task kind {kind!r}")
    rng = np.random.default_rng(seed)
    instances = []
    for _ in range(count):
        if kind == "sorting":
            instances.append(sorting_instance(_distinct_uniform(rng, (n,))))
        else:
            inst = TSPInstance(_distinct_uniform(rng, (n, 2)))
            if labels and n <= MAX_EXACT_TSP:
                tour, length = exact_tsp(inst)
                inst = TSPInstance(inst.points, canonical_tour(tour), length)
            instances.append(inst)
    return Dataset(kind, n, seed, instances)


def _instance_record(inst) -> dict:
    if isinstance(inst, SortingInstance):
        return {"values": inst.values.tolist(), "ground_truth": list(inst.ground_truth.ranks)}
    rec = {"points": inst.points.tolist()}
    if inst.optimal_tour is not None:
        rec["optimal_tour"] = list(inst.optimal_tour.ranks)
        rec["optimal_length"] = inst.optimal_length
    return rec


def save_dataset(ds: Dataset, path, extra_header: dict | None = None) -> None:
    header = ds.header()
    if extra_header:
        header.update(extra_header)
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for inst in ds.instances:
            fh.write(json.dumps(_instance_record(inst), sort_keys=True) + "\n")


def load_dataset(path) -> Dataset:
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    if header.get("schema") != DATASET_SCHEMA:
        raise ValueError(f"{path} is not a dataset file")
    instances = []
    for line in lines[1:]:
        rec = json.loads(line)
        if header["kind"] == "sorting":
            inst = sorting_instance(rec["values"])
            if list(inst.ground_truth.ranks) != rec["ground_truth"]:
                raise ValueError("stored ground truth disagrees with values")
        else:
            tour = rec.get("optimal_tour")
            inst = TSPInstance(
                np.asarray(rec["points"], dtype=float),
                None if tour is None else Permutation(tour),
                rec.get("optimal_length"),
            )
        instances.append(inst)
    return Dataset(header["kind"], header["n"], header["seed"], instances)


