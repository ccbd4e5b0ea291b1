"""Geometric and annotation types shared across the package.

Point collections are held as read-only ``(n, 2)`` float arrays of ``(x, y)``
rows; :class:`Point` is the scalar view used at API boundaries.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class Point(NamedTuple):
    x: float
    y: float

    @classmethod
    def of(cls, x, y) -> "Point":
        x, y = float(x), float(y)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError(f"non-finite coordinate ({x}, {y})")
        return cls(x, y)


def euclidean_distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def as_points(points) -> np.ndarray:
    """Coerce points (array, list of pairs or Points) to a frozen (n, 2) array."""
    arr = np.array(points, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    arr.setflags(write=False)
    return arr


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


class Protocol(str, enum.Enum):
    SPARSE = "Sparse"
    PARTIAL = "Partial"
    KCAP = "KCap"


@dataclass(frozen=True, eq=False)
class Scene:
    """A synthetic crowd image: an intensity grid plus ground-truth heads."""

    height: int
    width: int
    intensity: np.ndarray
    ground_truth: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ValueError("scene dimensions must be positive")
        object.__setattr__(self, "intensity", _frozen(self.intensity))
        object.__setattr__(self, "ground_truth", as_points(self.ground_truth))
        if self.intensity.shape != (self.height, self.width):
            raise ValueError(
                f"intensity shape {self.intensity.shape} != ({self.height}, {self.width})")
        if np.any(self.intensity < 0):
            raise ValueError("intensity must be non-negative")
        gt = self.ground_truth
        inside = (gt[:, 0] >= 0) & (gt[:, 0] < self.width) & (gt[:, 1] >= 0) & (gt[:, 1] < self.height)
        if not np.all(inside):
            raise ValueError("ground-truth point outside the scene")

    @property
    def count(self) -> int:
        return len(self.ground_truth)

    @property
    def points(self) -> tuple[Point, ...]:
        return tuple(Point(*map(float, p)) for p in self.ground_truth)

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (self.height == other.height and self.width == other.width
                and self.seed == other.seed
                and np.array_equal(self.intensity, other.intensity)
                and np.array_equal(self.ground_truth, other.ground_truth))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class AnnotationSet:
    """The labelled subset of a scene's heads.

    ``indices`` point into the source scene's ground truth, which makes the
    subset and no-duplicate invariants checkable without float comparisons.
    ``patch`` is the ``(x0, y0, x1, y1)`` rectangle for partial annotation.
    """

    points: np.ndarray
    indices: np.ndarray
    target_ratio: float
    realized_ratio: float
    protocol: Protocol
    patch: tuple[float, float, float, float] | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "points", as_points(self.points))
        idx = np.array(self.indices, dtype=np.int64).reshape(-1)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        if len(self.points) < 1:
            raise ValueError("an annotation set needs at least one point")
        if len(idx) != len(self.points):
            raise ValueError("indices and points differ in length")
        if len(np.unique(idx)) != len(idx):
            raise ValueError("duplicate annotated points")
        for name in ("target_ratio", "realized_ratio"):
            r = getattr(self, name)
            if not 0 < r <= 1:
                raise ValueError(f"{name}={r} outside (0, 1]")

    @property
    def count(self) -> int:
        return len(self.points)

    def is_subset_of(self, scene: Scene) -> bool:
        if np.any(self.indices < 0) or np.any(self.indices >= scene.count):
            return False
        return np.array_equal(scene.ground_truth[self.indices], self.points)

    def __eq__(self, other):
        if not isinstance(other, AnnotationSet):
            return NotImplemented
        return (np.array_equal(self.points, other.points)
                and np.array_equal(self.indices, other.indices)
                and self.target_ratio == other.target_ratio
                and self.realized_ratio == other.realized_ratio
                and self.protocol == other.protocol
                and self.patch == other.patch
                and self.seed == other.seed)

    __hash__ = None

