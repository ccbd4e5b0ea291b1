"""Classification and location losses for the two heads.

Each loss has a ``*_grad`` companion returning the derivative with respect
to its array inputs (confidences, or predicted points).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfidenceClampWarning, ConfigError

EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    lambda_total: float = 0.4   # PRN negative weight
    lambda1: float = 0.05       # location weight
    lambda2: float = 0.4        # PMN negative weight

    def __post_init__(self):
        for name in ("lambda_total", "lambda1", "lambda2"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be non-negative")


def _clamped(confidences):
    c = np.asarray(confidences, dtype=np.float64).reshape(-1)
    clamped = np.clip(c, EPS, 1 - EPS)
    if np.any((c <= 0) | (c >= 1)):
        warnings.warn("confidence saturated at 0 or 1; clamped to [1e-7, 1-1e-7]",
                      ConfidenceClampWarning, stacklevel=3)
    return c, clamped


def _positive_mask(M, matched):
    matched = np.asarray(matched, dtype=np.int64).reshape(-1)
    mask = np.zeros(M, dtype=bool)
    mask[matched] = True
    if mask.sum() != len(matched):
        raise ValueError("matched indices contain duplicates")
    return matched, mask


def _check_weights(weights, n):
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if len(w) != n:
        raise ValueError(f"{len(w)} weights for {n} matched proposals")
    if np.any((w < 0) | (w > 1)):
        raise ValueError("weights must lie in [0, 1]")
    return w


def weighted_cls_loss(confidences, matched, weights, lam: float) -> float:
    """-(1/M) (sum_matched w log c + lam * sum_unmatched log(1 - c))."""
    _, c = _clamped(confidences)
    matched, pos = _positive_mask(len(c), matched)
    w = _check_weights(weights, len(matched))
    pos_term = np.dot(w, np.log(c[matched]))
    neg_term = np.log1p(-c[~pos]).sum()
    return float(-(pos_term + lam * neg_term) / len(c))


def weighted_cls_grad(confidences, matched, weights, lam: float) -> np.ndarray:
    raw, c = _clamped(confidences)
    M = len(c)
    matched, pos = _positive_mask(M, matched)
    w = _check_weights(weights, len(matched))
    g = lam / (M * (1 - c))
    g[matched] = -w / (M * c[matched])
    # the clamp is flat outside [EPS, 1-EPS]
    g[(raw < EPS) | (raw > 1 - EPS)] = 0.0
    return g


def pmn_cls_loss(confidences, matched, lambda2: float) -> float:
    matched = np.asarray(matched).reshape(-1)
    return weighted_cls_loss(confidences, matched, np.ones(len(matched)), lambda2)


def pmn_cls_grad(confidences, matched, lambda2: float) -> np.ndarray:
    matched = np.asarray(matched).reshape(-1)
    return weighted_cls_grad(confidences, matched, np.ones(len(matched)), lambda2)


def prn_weighted_cls_loss(confidences, matched, weights, lam: float) -> float:
    return weighted_cls_loss(confidences, matched, weights, lam)


def prn_weighted_cls_grad(confidences, matched, weights, lam: float) -> np.ndarray:
    return weighted_cls_grad(confidences, matched, weights, lam)


def _pairs(targets, predictions):
    t = np.asarray(targets, dtype=np.float64).reshape(-1, 2)
    p = np.asarray(predictions, dtype=np.float64).reshape(-1, 2)
    if len(t) != len(p):
        raise ValueError(f"{len(t)} targets but {len(p)} predictions")
    if len(t) == 0:
        raise ValueError("location loss needs at least one pair")
    return t, p


def loc_loss(targets, matched_predictions) -> float:
    """Mean squared Euclidean distance between paired points."""
    t, p = _pairs(targets, matched_predictions)
    return float(np.sum((t - p) ** 2) / len(t))


def loc_grad(targets, matched_predictions) -> np.ndarray:
    """Derivative with respect to the predicted points."""
    t, p = _pairs(targets, matched_predictions)
    return 2.0 * (p - t) / len(t)


def total_loss(cls: float, loc: float, lambda1: float) -> float:
    return cls + lambda1 * loc
