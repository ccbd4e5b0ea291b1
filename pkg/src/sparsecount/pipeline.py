"""End-to-end training of the PMN and PRN heads, and counting at inference."""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assignment import build_cost, solve_assignment
from .errors import ConfigError
from .losses import (LossWeights, loc_grad, loc_loss, pmn_cls_grad, pmn_cls_loss,
                     total_loss, weighted_cls_grad, weighted_cls_loss)
from .model import ArchConfig, ModelParams, ProposalGrid, backward_trace, forward, forward_trace
from .pseudo import PseudoSet, ScheduleConfig, hard_threshold_select, pps_select
from .types import AnnotationSet, Scene

log = logging.getLogger(__name__)

SELECTIONS = ("pps", "hard")


@dataclass(frozen=True)
class TrainConfig:
    nu: float = 5e-2
    weights: LossWeights = field(default_factory=LossWeights)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    epochs: int = 60
    learning_rate: float = 2e-4
    batch_size: int = 8
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    infer_threshold: float = 0.5
    seed: int = 0
    init_scale: float = 1.0
    # variant switches
    use_prn: bool = True
    selection: str = "pps"
    hard_tau: float = 0.6
    weighted: bool = True
    union_annotations: bool = False
    augment: bool = True

    def __post_init__(self):
        if self.schedule.total_epochs != self.epochs:
            object.__setattr__(self, "schedule",
                               dataclasses.replace(self.schedule, total_epochs=self.epochs))
        if self.epochs < 1:
            raise ConfigError("epochs", "must be >= 1")
        if self.nu <= 0:
            raise ConfigError("nu", "must be > 0")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate", "must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size", "must be >= 1")
        if not 0 < self.infer_threshold < 1:
            raise ConfigError("infer_threshold", "must lie in (0, 1)")
        if self.selection not in SELECTIONS:
            raise ConfigError("selection", f"must be one of {SELECTIONS}, got {self.selection!r}")
        if not 0 < self.hard_tau < 1:
            raise ConfigError("hard_tau", "must lie in (0, 1)")

    @property
    def inference_head(self) -> str:
        return "prn" if self.use_prn else "pmn"


class Adam:
    def __init__(self, size: int, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad ** 2
        m_hat = self.m / (1 - self.b1 ** self.t)
        v_hat = self.v / (1 - self.b2 ** self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class StepReport:
    epoch: int
    step: int
    pmn_cls: float
    pmn_loc: float
    prn_cls: float
    prn_loc: float
    total: float
    n_pseudo: float
    threshold: float

    def row(self) -> list:
        return [self.epoch, self.step, *(repr(float(v)) for v in (
            self.pmn_cls, self.pmn_loc, self.prn_cls, self.prn_loc, self.total, self.n_pseudo,
            self.threshold))]


LOG_COLUMNS = ["epoch", "step", "pmn_cls", "pmn_loc", "prn_cls", "prn_loc", "total", "N^s", "threshold"]


@dataclass(frozen=True)
class MatchPlan:
    """The discrete choices made for one scene at one step.

    Holding a plan fixed turns the loss into a smooth function of the
    parameters; that is what gets differentiated.
    """

    pmn_matches: np.ndarray
    pseudo: PseudoSet | None
    prn_targets: np.ndarray | None
    prn_weights: np.ndarray | None
    prn_matches: np.ndarray | None


def select_pseudo(prediction, t: int, cfg: TrainConfig) -> PseudoSet:
    if cfg.selection == "pps":
        return pps_select(prediction, t, cfg.schedule)
    return hard_threshold_select(prediction, cfg.hard_tau)


def plan_matches(trace, ann: AnnotationSet, t: int, cfg: TrainConfig) -> MatchPlan:
    pmn = trace.pred["pmn"]
    if ann.count > len(pmn.points):
        raise ValueError(f"{ann.count} annotated points but only {len(pmn.points)} proposals; "
                         "use more anchors per cell")
    pmn_matches = solve_assignment(build_cost(ann.points, pmn.points, pmn.confidences, cfg.nu)).matches
    if not cfg.use_prn:
        return MatchPlan(pmn_matches, None, None, None, None)
    pseudo = select_pseudo(pmn, t, cfg)
    targets = pseudo.points
    weights = pseudo.weights if cfg.weighted else np.ones(pseudo.count)
    if cfg.union_annotations:
        targets = np.concatenate([targets, ann.points])
        weights = np.concatenate([weights, np.ones(ann.count)])
    prn = trace.pred["prn"]
    if len(targets) > len(prn.points):
        keep = np.argsort(-weights, kind="stable")[:len(prn.points)]
        targets, weights = targets[keep], weights[keep]
    if len(targets):
        prn_matches = solve_assignment(build_cost(targets, prn.points, prn.confidences, cfg.nu)).matches
    else:
        prn_matches = np.zeros(0, dtype=np.int64)
    return MatchPlan(pmn_matches, pseudo, targets, weights, prn_matches)


def scene_loss_and_grad(params: ModelParams, scene: Scene, ann: AnnotationSet, grid: ProposalGrid,
                        t: int, cfg: TrainConfig, plan: MatchPlan | None = None):
    """Loss terms, parameter gradient and match plan for one annotated scene."""
    heads = ("pmn", "prn") if cfg.use_prn else ("pmn",)
    trace = forward_trace(params, scene, grid, heads=heads)
    if plan is None:
        plan = plan_matches(trace, ann, t, cfg)
    w = cfg.weights
    M = grid.size

    pmn = trace.pred["pmn"]
    m = plan.pmn_matches
    terms = {"pmn_cls": pmn_cls_loss(pmn.confidences, m, w.lambda2),
             "pmn_loc": loc_loss(ann.points, pmn.points[m]),
             "prn_cls": 0.0, "prn_loc": 0.0, "n_pseudo": 0.0}
    d_off = np.zeros((M, 2))
    d_off[m] = w.lambda1 * loc_grad(ann.points, pmn.points[m])
    grads = {"pmn": (pmn_cls_grad(pmn.confidences, m, w.lambda2), d_off)}
    total = total_loss(terms["pmn_cls"], terms["pmn_loc"], w.lambda1)

    if cfg.use_prn:
        prn = trace.pred["prn"]
        m = plan.prn_matches
        terms["n_pseudo"] = float(len(plan.prn_targets))
        terms["prn_cls"] = weighted_cls_loss(prn.confidences, m, plan.prn_weights, w.lambda_total)
        d_conf = weighted_cls_grad(prn.confidences, m, plan.prn_weights, w.lambda_total)
        d_off = np.zeros((M, 2))
        if len(m):
            terms["prn_loc"] = loc_loss(plan.prn_targets, prn.points[m])
            d_off[m] = w.lambda1 * loc_grad(plan.prn_targets, prn.points[m])
        grads["prn"] = (d_conf, d_off)
        total += total_loss(terms["prn_cls"], terms["prn_loc"], w.lambda1)

    terms["total"] = total
    return terms, backward_trace(params, trace, grads), plan


def train_step(params: ModelParams, batch: Sequence[tuple[Scene, AnnotationSet]], grid: ProposalGrid,
               t: int, cfg: TrainConfig, optimizer: Adam | None = None, step: int = 0):
    """One optimizer update from the mean gradient over ``batch``."""
    if optimizer is None:
        optimizer = Adam(len(params.vector), cfg.learning_rate, cfg.betas, cfg.adam_eps)
    grad = np.zeros_like(params.vector)
    sums = dict.fromkeys(("pmn_cls", "pmn_loc", "prn_cls", "prn_loc", "total", "n_pseudo"), 0.0)
    threshold = math.nan
    for scene, ann in batch:
        if ann.count < 1:
            raise ValueError("empty annotation set in batch")
        terms, g, plan = scene_loss_and_grad(params, scene, ann, grid, t, cfg)
        grad += g
        for k in sums:
            sums[k] += terms[k]
        if plan.pseudo is not None:
            threshold = plan.pseudo.threshold
            if plan.pseudo.count == 0:
                log.debug("epoch %d: empty pseudo set, PRN trains on negatives only", t)
    n = len(batch)
    grad /= n
    new = ModelParams(params.arch, optimizer.step(params.vector, grad))
    report = StepReport(t, step, *(sums[k] / n for k in
                                   ("pmn_cls", "pmn_loc", "prn_cls", "prn_loc", "total", "n_pseudo")),
                        threshold)
    return new, report


def train(scenes: Sequence[Scene], annotations: Sequence[AnnotationSet], arch: ArchConfig,
          cfg: TrainConfig, log_path=None):
    """Train from scratch; returns final parameters and the per-step reports."""
    if len(scenes) != len(annotations) or not scenes:
        raise ValueError("need one annotation set per scene, and at least one scene")
    grid = arch.grid()
    params = ModelParams.init(arch, cfg.seed, cfg.init_scale)
    opt = Adam(len(params.vector), cfg.learning_rate, cfg.betas, cfg.adam_eps)
    rng = np.random.default_rng(cfg.seed)
    reports = []
    step = 0
    for t in range(cfg.epochs):
        order = rng.permutation(len(scenes))
        for b in range(0, len(order), cfg.batch_size):
            idx = order[b:b + cfg.batch_size]
            flips = rng.integers(0, 8, size=len(idx)) if cfg.augment else np.zeros(len(idx), int)
            batch = [dihedral(scenes[i], annotations[i], int(k)) for i, k in zip(idx, flips)]
            params, rep = train_step(params, batch, grid, t, cfg, opt, step)
            reports.append(rep)
            step += 1
    if log_path is not None:
        write_training_log(log_path, reports)
    return params, reports


def dihedral(scene: Scene, ann: AnnotationSet, k: int) -> tuple[Scene, AnnotationSet]:
    """Apply one of the 8 flips/rotations of a square scene (``k`` in 0..7).

    The anchor layout is symmetric under all of them, so an augmented scene
    still lines up with the proposal grid.
    """
    if k == 0:
        return scene, ann
    if scene.height != scene.width:
        raise ValueError("dihedral augmentation needs a square scene")
    n = scene.width
    img = scene.intensity
    gt, pts = scene.ground_truth, ann.points
    if k & 4:
        img, gt, pts = img.T, gt[:, ::-1], pts[:, ::-1]
    if k & 1:
        img = img[:, ::-1]
        gt, pts = gt * [-1, 1] + [n, 0], pts * [-1, 1] + [n, 0]
    if k & 2:
        img = img[::-1, :]
        gt, pts = gt * [1, -1] + [0, n], pts * [1, -1] + [0, n]
    # mirrored coordinates can land exactly on the far border
    gt, pts = np.minimum(gt, np.nextafter(n, 0)), np.minimum(pts, np.nextafter(n, 0))
    return (Scene(n, n, img, gt, scene.seed),
            dataclasses.replace(ann, points=pts))


def write_training_log(path, reports: Sequence[StepReport]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in reports:
            w.writerow(r.row())


def read_training_log(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def infer_count(params: ModelParams, scene: Scene, grid: ProposalGrid, cfg: TrainConfig,
                head: str | None = None):
    """Count proposals whose confidence reaches ``cfg.infer_threshold``."""
    pred = forward(params, scene, grid, head or cfg.inference_head)
    keep = pred.confidences >= cfg.infer_threshold
    return int(keep.sum()), pred.points[keep]
