"""Synthetic crowd scenes and the annotation protocols applied to them."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .types import AnnotationSet, Protocol, Scene

MIN_RATIO = 0.01


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the Poisson-cluster scene generator.

    Parents are Poisson with mean ``expected_count / cluster_size``; each parent
    has Poisson(``cluster_size``) children scattered with an isotropic Gaussian
    of std ``cluster_spread``. With ``fixed_count`` the head count is exactly
    ``round(expected_count)`` and only positions are random.
    """

    height: int = 32
    width: int = 32
    expected_count: float = 40.0
    cluster_spread: float = 3.0
    render_sigma: float = 1.0
    seed: int = 0
    cluster_size: float = 4.0
    fixed_count: bool = False

    def validate(self) -> None:
        if self.height <= 0 or self.width <= 0:
            raise ConfigError("height/width", "must be positive")
        if not self.expected_count > 0:
            raise ConfigError("expected_count", f"must be > 0, got {self.expected_count}")
        if self.render_sigma <= 0:
            raise ConfigError("render_sigma", "must be > 0")
        if self.cluster_spread < 0:
            raise ConfigError("cluster_spread", "must be >= 0")
        if self.cluster_size <= 0:
            raise ConfigError("cluster_size", "must be > 0")


@dataclass(frozen=True)
class DisturbanceSpec:
    """Gaussian jitter of the annotation ratio, in percentage points.

    ``variance`` is in percentage-points squared; draws are clipped at
    ``clip_sigmas`` standard deviations.
    """

    variance: float = 0.0
    clip_sigmas: float = 3.0

    def __post_init__(self):
        if self.variance < 0:
            raise ConfigError("variance", "must be >= 0")

    @property
    def half_range(self) -> float:
        """Largest possible ratio change, as a fraction."""
        return self.clip_sigmas * math.sqrt(self.variance) / 100.0


def _reflect(v: np.ndarray, size: float) -> np.ndarray:
    v = np.mod(v, 2 * size)
    v = np.where(v >= size, 2 * size - v, v)
    # the mirror image of 0 is `size`, which is outside [0, size)
    return np.minimum(v, np.nextafter(size, 0))


def render(points: np.ndarray, height: int, width: int, sigma: float) -> np.ndarray:
    """Sum of unit-mass Gaussians sampled at pixel centres; mass past the border is lost."""
    ys = np.arange(height) + 0.5
    xs = np.arange(width) + 0.5
    gx = np.exp(-(xs[None, :] - points[:, :1]) ** 2 / (2 * sigma ** 2))
    gy = np.exp(-(ys[None, :] - points[:, 1:]) ** 2 / (2 * sigma ** 2))
    return (gy.T @ gx) / (2 * math.pi * sigma ** 2)


def generate_scene(cfg: SynthConfig) -> Scene:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    if cfg.fixed_count:
        n = int(round(cfg.expected_count))
        n_parents = max(1, int(round(n / cfg.cluster_size)))
        owner = rng.integers(0, n_parents, size=n)
    else:
        n_parents = rng.poisson(cfg.expected_count / cfg.cluster_size)
        sizes = rng.poisson(cfg.cluster_size, size=n_parents)
        owner = np.repeat(np.arange(n_parents), sizes)
        n = len(owner)
    parents = rng.uniform(0, 1, size=(n_parents, 2)) * [cfg.width, cfg.height]
    pts = parents[owner] + rng.normal(0, 1, size=(n, 2)) * cfg.cluster_spread
    pts[:, 0] = _reflect(pts[:, 0], cfg.width)
    pts[:, 1] = _reflect(pts[:, 1], cfg.height)
    intensity = render(pts, cfg.height, cfg.width, cfg.render_sigma)
    return Scene(cfg.height, cfg.width, intensity, pts, cfg.seed)


def _check_ratio(ratio: float) -> None:
    if not 0 < ratio <= 1:
        raise ConfigError("ratio", f"must lie in (0, 1], got {ratio}")


def annotation_budget(ratio: float, n: int) -> int:
    """N^c = ratio * N rounded half-up, never below one."""
    return max(1, int(math.floor(ratio * n + 0.5 + 1e-9)))


def _subset(scene: Scene, idx: np.ndarray, ratio: float, protocol: Protocol,
            seed: int, patch=None) -> AnnotationSet:
    idx = np.sort(idx)
    return AnnotationSet(points=scene.ground_truth[idx], indices=idx, target_ratio=ratio,
                         realized_ratio=len(idx) / scene.count, protocol=protocol,
                         patch=patch, seed=seed)


def sample_sparse(scene: Scene, ratio: float, seed: int) -> AnnotationSet:
    """Annotate a uniform random subset of ``round(ratio * N)`` heads."""
    _check_ratio(ratio)
    if scene.count < 1:
        raise ValueError("scene has no heads to annotate")
    rng = np.random.default_rng(seed)
    idx = rng.choice(scene.count, size=annotation_budget(ratio, scene.count), replace=False)
    return _subset(scene, idx, ratio, Protocol.SPARSE, seed)


def sample_kcap(scene: Scene, k: int, seed: int) -> AnnotationSet:
    """Annotate ``min(k, N)`` uniformly chosen heads."""
    if k < 1:
        raise ConfigError("k", "must be >= 1")
    if scene.count < 1:
        raise ValueError("scene has no heads to annotate")
    rng = np.random.default_rng(seed)
    n = min(k, scene.count)
    idx = rng.choice(scene.count, size=n, replace=False)
    return _subset(scene, idx, min(1.0, k / scene.count), Protocol.KCAP, seed)


def sample_partial(scene: Scene, ratio: float, seed: int, max_retries: int = 100) -> AnnotationSet:
    """Annotate every head inside one rectangle holding about ``ratio * N`` heads.

    The rectangle keeps the scene's aspect ratio. Its relative position
    ``(u, v)`` is random; its scale ``f`` is found by bisection, and the
    rectangles for growing ``f`` are nested so the count is monotone in ``f``.
    """
    _check_ratio(ratio)
    if scene.count < 1:
        raise ValueError("scene has no heads to annotate")
    W, H = scene.width, scene.height
    x, y = scene.ground_truth[:, 0], scene.ground_truth[:, 1]
    if ratio == 1.0:
        return _subset(scene, np.arange(scene.count), ratio, Protocol.PARTIAL, seed,
                       patch=(0.0, 0.0, float(W), float(H)))
    target = annotation_budget(ratio, scene.count)
    rng = np.random.default_rng(seed)

    def rect(f, u, v):
        x0, y0 = u * (1 - f) * W, v * (1 - f) * H
        return x0, y0, x0 + f * W, y0 + f * H

    def inside(r):
        return (x >= r[0]) & (x < r[2]) & (y >= r[1]) & (y < r[3])

    for _ in range(max_retries):
        u, v = rng.uniform(0, 1, size=2)
        lo, hi = 0.0, 1.0
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            if inside(rect(mid, u, v)).sum() >= target:
                hi = mid
            else:
                lo = mid
        r = rect(hi, u, v)
        mask = inside(r)
        if mask.any():
            return _subset(scene, np.flatnonzero(mask), ratio, Protocol.PARTIAL, seed,
                           patch=tuple(float(c) for c in r))
    raise RuntimeError(f"no non-empty patch found after {max_retries} retries")


def disturb_ratio(base_ratio: float, spec: DisturbanceSpec, seed: int) -> float:
    """Jitter an annotation ratio by clipped Gaussian noise in percentage points."""
    _check_ratio(base_ratio)
    if spec.variance == 0:
        return base_ratio
    rng = np.random.default_rng(seed)
    sd = math.sqrt(spec.variance)
    delta = float(np.clip(rng.normal(0.0, sd), -spec.clip_sigmas * sd, spec.clip_sigmas * sd))
    return float(min(1.0, max(MIN_RATIO, base_ratio + delta / 100.0)))
