"""Crowd counting from sparse point annotations on synthetic scenes.

Two-stage point proposal network: a matching head trained against the
labeled subset, and a restoration head distilled from its progressively
selected pseudo points.
"""
from .assignment import Assignment, CostMatrix, build_cost, solve_assignment
from .errors import ConfidenceClampWarning, ConfigError
from .evalkit import CountReport, LocalizationReport, count_metrics, localization_metrics
from .losses import LossWeights, loc_loss, pmn_cls_loss, prn_weighted_cls_loss, total_loss
from .model import ArchConfig, ModelParams, Prediction, ProposalGrid, forward, generate_proposals
from .pipeline import TrainConfig, infer_count, train, train_step
from .pseudo import PseudoSet, ScheduleConfig, hard_threshold_select, pps_select, pps_threshold, schedule_weight
from .synth import (DisturbanceSpec, SynthConfig, disturb_ratio, generate_scene, sample_kcap, sample_partial,
                    sample_sparse)
from .types import AnnotationSet, Point, Protocol, Scene

__version__ = "0.1.0"
