"""Counting and localization metrics.

"MSE" follows the crowd-counting convention: it is the root of the mean
squared count error, so it is always at least the MAE.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assignment import pairwise_distance, solve_assignment

DEFAULT_SIGMAS = (4.0, 8.0)


@dataclass(frozen=True)
class CountReport:
    mae: float
    mse: float
    per_scene: tuple[tuple[int, int], ...] = ()


def count_metrics(pairs: Sequence[tuple[int, int]]) -> CountReport:
    """MAE and root-mean-square error over (true, predicted) counts."""
    pairs = tuple((int(t), int(p)) for t, p in pairs)
    if not pairs:
        raise ValueError("count_metrics needs at least one (true, predicted) pair")
    err = np.array([p - t for t, p in pairs], dtype=np.float64)
    return CountReport(float(np.mean(np.abs(err))), math.sqrt(float(np.mean(err ** 2))), pairs)


@dataclass(frozen=True)
class LocalizationReport:
    sigma: float
    precision: float
    recall: float
    f1: float
    tp: int = 0
    matched_pairs: tuple[tuple[int, int], ...] = field(default=())


def f1_score(precision: float, recall: float) -> float:
    s = precision + recall
    return 2 * precision * recall / s if s > 0 else 0.0


def localization_metrics(predicted, truth, sigma: float) -> LocalizationReport:
    """Precision/recall/F1 with one-to-one matching inside radius ``sigma``.

    Among matchings restricted to pairs no further apart than ``sigma``, the
    one with the most pairs wins, and among those the one with the smallest
    total distance. Non-edges get a penalty larger than any possible sum of
    real edge costs, which makes the assignment solver realise exactly that
    lexicographic order.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    pred = np.asarray(predicted, dtype=np.float64).reshape(-1, 2)
    gt = np.asarray(truth, dtype=np.float64).reshape(-1, 2)
    if len(pred) == 0 or len(gt) == 0:
        return LocalizationReport(float(sigma), 0.0, 0.0, 0.0, 0, ())
    d = pairwise_distance(pred, gt)
    edge = d <= sigma
    if not edge.any():
        return LocalizationReport(float(sigma), 0.0, 0.0, 0.0, 0, ())
    transpose = len(pred) > len(gt)
    cost_d = d.T if transpose else d
    cost_e = edge.T if transpose else edge
    penalty = (min(cost_d.shape) + 1) * sigma + 1.0
    cost = np.where(cost_e, cost_d, penalty)
    a = solve_assignment(cost)
    pairs = [(i, int(j)) for i, j in enumerate(a.matches) if cost_e[i, j]]
    if transpose:
        pairs = [(j, i) for i, j in pairs]
    pairs.sort()
    tp = len(pairs)
    precision, recall = tp / len(pred), tp / len(gt)
    return LocalizationReport(float(sigma), precision, recall, f1_score(precision, recall),
                              tp, tuple(pairs))


def write_count_csv(path, names: Sequence[str], report: CountReport) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["scene", "true_count", "predicted_count", "abs_error"])
        for name, (t, p) in zip(names, report.per_scene):
            w.writerow([name, t, p, abs(p - t)])


def write_summary_json(path, summary: dict) -> None:
    with open(path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
