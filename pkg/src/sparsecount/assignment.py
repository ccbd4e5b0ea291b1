"""Matching cost between target points and proposals, and a rectangular
linear-assignment solver.

The solver is the shortest-augmenting-path method (Jonker-Volgenant style)
run directly on the ``rows x cols`` matrix: one Dijkstra search over the
columns per row, with dual potentials keeping reduced costs non-negative.
Nothing is padded to square, which matters because proposals vastly
outnumber targets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class CostMatrix:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"cost matrix must be 2-D, got shape {v.shape}")
        if v.shape[0] > v.shape[1]:
            raise ValueError(f"more targets ({v.shape[0]}) than proposals ({v.shape[1]})")
        if not np.all(np.isfinite(v)):
            raise ValueError("cost entries must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class Assignment:
    """``matches[i]`` is the proposal assigned to target ``i``."""

    matches: np.ndarray
    total_cost: float
    cols: int

    @property
    def unmatched(self) -> np.ndarray:
        mask = np.ones(self.cols, dtype=bool)
        mask[self.matches] = False
        return np.flatnonzero(mask)


def pairwise_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    return np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])


def build_cost(targets, predicted, confidences, nu: float) -> CostMatrix:
    """Entry ``(i, j) = nu * ||target_i - predicted_j|| - confidence_j``."""
    predicted = np.asarray(predicted, dtype=np.float64).reshape(-1, 2)
    confidences = np.asarray(confidences, dtype=np.float64).reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 2)
    if len(predicted) != len(confidences):
        raise ValueError(f"{len(predicted)} predicted points but {len(confidences)} confidences")
    if len(targets) < 1:
        raise ValueError("need at least one target")
    return CostMatrix(nu * pairwise_distance(targets, predicted) - confidences[None, :])


def solve_assignment(cost) -> Assignment:
    """Minimum-cost matching of every row to a distinct column.

    Ties between equally short augmenting paths go to the lowest column
    index, so the output is deterministic.
    """
    if not isinstance(cost, CostMatrix):
        cost = CostMatrix(cost)
    C = cost.values
    n, m = C.shape
    u = np.zeros(n)
    v = np.zeros(m)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(m, -1, dtype=np.int64)

    for cur in range(n):
        shortest = np.full(m, np.inf)
        path = np.full(m, -1, dtype=np.int64)
        done_col = np.zeros(m, dtype=bool)
        visited_rows = []
        i, min_val, sink = cur, 0.0, -1
        while sink < 0:
            visited_rows.append(i)
            reduced = min_val + C[i] - u[i] - v
            better = (~done_col) & (reduced < shortest)
            shortest[better] = reduced[better]
            path[better] = i
            masked = np.where(done_col, np.inf, shortest)
            j = int(np.argmin(masked))
            min_val = masked[j]
            done_col[j] = True
            if row4col[j] < 0:
                sink = j
            else:
                i = int(row4col[j])

        u[cur] += min_val
        for r in visited_rows[1:]:
            u[r] += min_val - shortest[col4row[r]]
        v[done_col] -= min_val - shortest[done_col]

        j = sink
        while True:
            i = int(path[j])
            row4col[j] = i
            col4row[i], j = j, col4row[i]
            if i == cur:
                break

    total = math.fsum(C[np.arange(n), col4row])
    col4row.setflags(write=False)
    return Assignment(col4row, total, m)
