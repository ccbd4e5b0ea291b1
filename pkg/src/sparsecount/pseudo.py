"""Turning PMN predictions into pseudo point labels.

Two rules: a fixed threshold (``c > tau``), and progressive proposal
selection, whose threshold ``tau1 - tau2 * W_t`` (``c >= ...``) falls as the
epoch weight ``W_t`` rises from 0 to 1. The strict/non-strict difference
between the two rules is intentional.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import Prediction


@dataclass(frozen=True)
class ScheduleConfig:
    tau1: float = 0.6
    tau2: float = 0.4
    total_epochs: int = 60
    shape_k: float = 3.0

    def __post_init__(self):
        if not 0 <= self.tau2 < self.tau1 <= 1:
            raise ConfigError("tau1/tau2", f"need 0 <= tau2 < tau1 <= 1, got {self.tau1}, {self.tau2}")
        if self.total_epochs < 1:
            raise ConfigError("total_epochs", "must be >= 1")
        if self.shape_k <= 0:
            raise ConfigError("shape_k", "must be > 0")


@dataclass(frozen=True, eq=False)
class PseudoSet:
    points: np.ndarray
    weights: np.ndarray
    indices: np.ndarray
    threshold: float
    source_epoch: int | None = None

    @property
    def count(self) -> int:
        return len(self.indices)


def _select(prediction: Prediction, mask: np.ndarray, threshold: float, epoch) -> PseudoSet:
    idx = np.flatnonzero(mask)
    return PseudoSet(points=prediction.points[idx].copy(),
                     weights=prediction.confidences[idx].copy(),
                     indices=idx, threshold=float(threshold), source_epoch=epoch)


def hard_threshold_select(prediction: Prediction, tau: float) -> PseudoSet:
    if not 0 < tau < 1:
        raise ConfigError("tau", f"must lie in (0, 1), got {tau}")
    return _select(prediction, prediction.confidences > tau, tau, None)


def schedule_weight(t: int, cfg: ScheduleConfig) -> float:
    """W_t = (exp(k t / T) - 1) / (exp(k) - 1); W_0 = 0, W_T = 1."""
    T = cfg.total_epochs
    if not 0 <= t <= T:
        raise ValueError(f"epoch {t} outside [0, {T}]")
    if t == T:
        return 1.0
    k = cfg.shape_k
    return math.expm1(k * t / T) / math.expm1(k)


def pps_threshold(t: int, cfg: ScheduleConfig) -> float:
    # rounding keeps decimal endpoints exact (0.6 - 0.4 alone is 0.19999999999999996);
    # it is monotone, so the threshold still never rises
    return round(cfg.tau1 - cfg.tau2 * schedule_weight(t, cfg), 12)


def pps_select(prediction: Prediction, t: int, cfg: ScheduleConfig) -> PseudoSet:
    thr = pps_threshold(t, cfg)
    return _select(prediction, prediction.confidences >= thr, thr, t)
