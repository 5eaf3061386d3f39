"""Metric aggregation for sorting and TSP predictions."""

from __future__ import annotations

import numpy as np

from .permutation import Permutation, accuracy_and_correctness, kendall_tau
from .tasks import SortingInstance, TSPInstance, optimality_gap, tour_length


def sorting_metrics(preds: list[Permutation], instances: list[SortingInstance]) -> dict:
    taus, exact, correct = [], 0, []
    for pred, inst in zip(preds, instances, strict=True):
        taus.append(kendall_tau(pred, inst.ground_truth))
        e, c = accuracy_and_correctness(pred, inst.ground_truth)
        exact += e
        correct.append(c)
    return {
        "count": len(preds),
        "kendall_tau": float(np.mean(taus)),
        "accuracy": exact / len(preds),
        "correctness": float(np.mean(correct)),
    }


def tsp_metrics(preds: list[Permutation], instances: list[TSPInstance]) -> dict:
    """``preds`` are rank-form outputs; the visit order is their inverse."""
    lengths, gaps = [], []
    for pred, inst in zip(preds, instances, strict=True):
        length = tour_length(inst, pred.inverse())
        lengths.append(length)
        if inst.optimal_length is not None:
            gaps.append(optimality_gap(length, inst.optimal_length))
    out = {"count": len(preds), "mean_tour_length": float(np.mean(lengths))}
    if gaps:
        out["mean_gap"] = float(np.mean(gaps))
    return out


def task_metrics(kind: str, preds, instances) -> dict:
    return sorting_metrics(preds, instances) if kind == "sorting" else tsp_metrics(preds, instances)
