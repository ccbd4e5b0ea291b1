"""Declarative experiment specs and the runner that reproduces the ablation
grids on synthetic scenes.

A spec is a TOML file with the tables ``[dataset]``, ``[model]``,
``[train]``, ``[run]`` and ``[experiment]`` plus top-level ``kind`` and
``seed``. Every field has a default; the fully resolved spec (defaults
filled in) is what gets hashed and written to the manifest, so nothing is
silently implied.
"""
from __future__ import annotations

import copy
import csv
import dataclasses
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .evalkit import count_metrics, localization_metrics
from .losses import LossWeights
from .model import ArchConfig
from .pipeline import TrainConfig, infer_count, train
from .pseudo import ScheduleConfig
from .synth import (DisturbanceSpec, SynthConfig, annotation_budget, disturb_ratio, generate_scene,
                    sample_kcap, sample_partial, sample_sparse)

log = logging.getLogger(__name__)

KINDS = ("ratio_sweep", "ablation_pps", "disturbance", "protocol_compare", "kcap", "localization")

VARIANTS = {
    "baseline": dict(use_prn=False),
    "ppm": dict(use_prn=True, selection="pps", weighted=True),
    "hard": dict(use_prn=True, selection="hard", weighted=False),
    "hard+weighted": dict(use_prn=True, selection="hard", weighted=True),
    "pps": dict(use_prn=True, selection="pps", weighted=False),
    "pps+weighted": dict(use_prn=True, selection="pps", weighted=True),
}

DEFAULTS = {
    "kind": "ratio_sweep",
    "seed": 0,
    "dataset": {
        "height": 32, "width": 32, "expected_count": 40.0, "cluster_spread": 3.0,
        "render_sigma": 1.0, "cluster_size": 4.0, "train_scenes": 64, "test_scenes": 32,
    },
    "model": {"stride": 4, "anchors_per_cell": 4, "channels1": 4, "channels2": 8, "input_scale": 6.0},
    "train": {
        "nu": 0.05, "lambda_total": 0.4, "lambda1": 0.05, "lambda2": 0.4,
        "tau1": 0.6, "tau2": 0.4, "shape_k": 3.0, "epochs": 60, "learning_rate": 1e-3,
        "batch_size": 8, "beta1": 0.9, "beta2": 0.999, "adam_eps": 1e-8, "infer_threshold": 0.5,
        "init_scale": 1.0, "hard_tau": 0.6, "union_annotations": False, "augment": True,
    },
    "run": {"protocol": "sparse", "ratio": 0.6, "k": 10, "variant": "ppm"},
    "experiment": {
        "ratios": [1.0, 0.8, 0.6, 0.4, 0.2],
        "variants": ["baseline", "ppm"],
        "repeats": 1,
        "variances": [0.0, 3.0, 5.0, 11.0, 25.0],
        "protocols": ["sparse", "partial"],
        "sigmas": [4.0, 8.0],
    },
}

# per-kind overrides of the [experiment] defaults
KIND_DEFAULTS = {
    "ratio_sweep": {},
    "ablation_pps": {"ratios": [0.6], "variants": ["hard", "hard+weighted", "pps", "pps+weighted"],
                     "repeats": 3},
    "disturbance": {"ratios": [0.8, 0.6], "variants": ["ppm"]},
    "protocol_compare": {"ratios": [0.8, 0.6], "variants": ["baseline", "ppm"]},
    "kcap": {"ratios": [0.8, 0.7], "variants": ["baseline", "ppm"]},
    "localization": {"ratios": [0.9, 0.8], "variants": ["ppm"]},
}


def _merge(base: dict, over: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in base:
            raise ConfigError(f"{where}{key}", "unknown field")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where}{key}", "expected a table")
            out[key] = _merge(base[key], val, f"{where}{key}.")
        else:
            out[key] = val
    return out


def resolve_spec(raw: dict, seed: int | None = None) -> dict:
    """Fill defaults, apply a seed override and validate; returns a plain dict."""
    kind = raw.get("kind", DEFAULTS["kind"])
    if kind not in KINDS:
        raise ConfigError("kind", f"must be one of {KINDS}, got {kind!r}")
    base = copy.deepcopy(DEFAULTS)
    base["experiment"].update(KIND_DEFAULTS[kind])
    spec = _merge(base, raw, "")
    if seed is not None:
        spec["seed"] = int(seed)
    validate_spec(spec)
    return spec


def validate_spec(spec: dict) -> None:
    ex = spec["experiment"]
    for v in ex["variants"]:
        if v not in VARIANTS:
            raise ConfigError("experiment.variants", f"unknown variant {v!r}")
    if spec["run"]["variant"] not in VARIANTS:
        raise ConfigError("run.variant", f"unknown variant {spec['run']['variant']!r}")
    for r in ex["ratios"]:
        if not 0 < r <= 1:
            raise ConfigError("experiment.ratios", f"ratio {r} outside (0, 1]")
    for p in ex["protocols"] + [spec["run"]["protocol"]]:
        if p not in ("sparse", "partial", "kcap"):
            raise ConfigError("experiment.protocols", f"unknown protocol {p!r}")
    if ex["repeats"] < 1:
        raise ConfigError("experiment.repeats", "must be >= 1")
    for name in ("train_scenes", "test_scenes"):
        if spec["dataset"][name] < 1:
            raise ConfigError(f"dataset.{name}", "must be >= 1")
    # building the typed configs runs their own checks
    synth_config(spec, 0)
    arch_config(spec).validate()
    train_config(spec, "ppm", 0)


def load_spec(path, seed: int | None = None) -> tuple[dict, str]:
    text = Path(path).read_text()
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(str(path), f"not valid TOML: {e}") from e
    return resolve_spec(raw, seed), text


def spec_hash(spec: dict) -> str:
    return hashlib.sha256(json.dumps(spec, sort_keys=True).encode()).hexdigest()[:16]


def git_blob_hash(text: str) -> str:
    data = text.encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


# -- typed configs from a resolved spec ------------------------------------------

def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def synth_config(spec: dict, seed: int) -> SynthConfig:
    d = spec["dataset"]
    cfg = SynthConfig(height=d["height"], width=d["width"], expected_count=d["expected_count"],
                      cluster_spread=d["cluster_spread"], render_sigma=d["render_sigma"],
                      cluster_size=d["cluster_size"], seed=seed)
    cfg.validate()
    return cfg


def arch_config(spec: dict) -> ArchConfig:
    d, m = spec["dataset"], spec["model"]
    return ArchConfig(height=d["height"], width=d["width"], **m)


def train_config(spec: dict, variant: str, seed: int) -> TrainConfig:
    t = spec["train"]
    return TrainConfig(
        nu=t["nu"],
        weights=LossWeights(t["lambda_total"], t["lambda1"], t["lambda2"]),
        schedule=ScheduleConfig(t["tau1"], t["tau2"], t["epochs"], t["shape_k"]),
        epochs=t["epochs"], learning_rate=t["learning_rate"], batch_size=t["batch_size"],
        betas=(t["beta1"], t["beta2"]), adam_eps=t["adam_eps"],
        infer_threshold=t["infer_threshold"], seed=seed, init_scale=t["init_scale"],
        hard_tau=t["hard_tau"], union_annotations=t["union_annotations"], augment=t["augment"],
        **VARIANTS[variant])


def make_scenes(spec: dict, repeat: int):
    """Train and test scenes for one repeat; scenes with no heads are skipped."""
    root = spec["seed"]
    out = []
    for split, tag, n in (("train", 1, spec["dataset"]["train_scenes"]),
                          ("test", 2, spec["dataset"]["test_scenes"])):
        scenes, i = [], 0
        while len(scenes) < n:
            s = generate_scene(synth_config(spec, derive_seed(root, repeat, tag, i)))
            i += 1
            if s.count:
                scenes.append(s)
        out.append(scenes)
    return out


def annotate(scenes, protocol: str, ratio: float, k: int, seed_parts, disturbance: float = 0.0):
    anns = []
    for i, s in enumerate(scenes):
        seed = derive_seed(*seed_parts, i)
        if protocol == "sparse":
            r = disturb_ratio(ratio, DisturbanceSpec(disturbance), derive_seed(seed, 1)) if disturbance else ratio
            anns.append(sample_sparse(s, r, seed))
        elif protocol == "partial":
            anns.append(sample_partial(s, ratio, seed))
        elif protocol == "kcap":
            anns.append(sample_kcap(s, k, seed))
        else:
            raise ConfigError("protocol", f"unknown protocol {protocol!r}")
    return anns


def matched_k(scenes, ratio: float) -> int:
    """Smallest K whose K-capped annotation budget reaches the sparse budget."""
    counts = np.array([s.count for s in scenes])
    budget = sum(annotation_budget(ratio, int(n)) for n in counts)
    k = 1
    while np.minimum(counts, k).sum() < budget:
        k += 1
    return k


# -- jobs ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Job:
    variant: str
    ratio: float
    repeat: int
    protocol: str = "sparse"
    variance: float = 0.0
    k: int = 0


def plan_jobs(spec: dict) -> list[Job]:
    ex, kind = spec["experiment"], spec["kind"]
    jobs = []
    for rep in range(ex["repeats"]):
        for ratio in ex["ratios"]:
            if kind == "disturbance":
                jobs += [Job(v, ratio, rep, variance=var) for var in ex["variances"] for v in ex["variants"]]
            elif kind == "protocol_compare":
                jobs += [Job(v, ratio, rep, protocol=p) for p in ex["protocols"] for v in ex["variants"]]
            elif kind == "kcap":
                jobs += [Job(v, ratio, rep, protocol=p) for p in ("sparse", "kcap") for v in ex["variants"]
                         if not (p == "kcap" and v == "baseline")]
            else:
                jobs += [Job(v, ratio, rep) for v in ex["variants"]]
    return jobs


def run_job(spec: dict, job: Job) -> dict:
    train_scenes, test_scenes = make_scenes(spec, job.repeat)
    root = spec["seed"]
    k = matched_k(train_scenes, job.ratio) if job.protocol == "kcap" else 0
    # annotations depend on protocol and ratio only, so variants share them
    anns = annotate(train_scenes, job.protocol, job.ratio, k,
                    (root, job.repeat, 3, int(round(job.ratio * 1000)), int(job.variance * 1000)),
                    job.variance)
    arch = arch_config(spec)
    cfg = train_config(spec, job.variant, derive_seed(root, job.repeat, 4))
    params, reports = train(train_scenes, anns, arch, cfg)
    grid = arch.grid()
    pairs, preds = [], []
    for s in test_scenes:
        n, pts = infer_count(params, s, grid, cfg)
        pairs.append((s.count, n))
        preds.append(pts)
    counts = count_metrics(pairs)
    row = dict(dataclasses.asdict(job), k=k,
               realized_ratio=float(np.mean([a.realized_ratio for a in anns])),
               mae=counts.mae, mse=counts.mse,
               final_n_pseudo=reports[-1].n_pseudo)
    for sigma in spec["experiment"]["sigmas"]:
        tp = n_pred = n_true = 0
        for s, pts in zip(test_scenes, preds):
            rep = localization_metrics(pts, s.ground_truth, sigma)
            tp, n_pred, n_true = tp + rep.tp, n_pred + len(pts), n_true + s.count
        p = tp / n_pred if n_pred else 0.0
        r = tp / n_true if n_true else 0.0
        row[f"precision@{sigma:g}"], row[f"recall@{sigma:g}"] = p, r
        row[f"f1@{sigma:g}"] = 2 * p * r / (p + r) if p + r else 0.0
    return row


def _run_job_star(args):
    return run_job(*args)


# -- result tables -----------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return repr(round(v, 10))
    return v


def summarize(spec: dict, rows: list[dict]) -> tuple[list[str], list[list]]:
    """Average job rows over repeats into the table for this experiment kind."""
    kind = spec["kind"]
    sigmas = spec["experiment"]["sigmas"]
    keys = {
        "ratio_sweep": ("ratio", "variant"),
        "ablation_pps": ("ratio", "variant"),
        "disturbance": ("ratio", "variance", "variant"),
        "protocol_compare": ("ratio", "protocol", "variant"),
        "kcap": ("ratio", "protocol", "variant"),
        "localization": ("ratio", "variant"),
    }[kind]
    metrics = ["mae", "mse", "realized_ratio"]
    if kind == "disturbance":
        metrics.append("range_pp")
    if kind == "kcap":
        metrics.append("k")
    if kind == "localization":
        metrics += [f"{m}@{s:g}" for s in sigmas for m in ("precision", "recall", "f1")]
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    header = list(keys) + metrics + ["repeats"]
    table = []
    for key, grp in groups.items():
        vals = []
        for m in metrics:
            if m == "range_pp":
                vals.append(DisturbanceSpec(grp[0]["variance"]).half_range * 100)
            else:
                vals.append(float(np.mean([g[m] for g in grp])))
        table.append(list(key) + vals + [len(grp)])
    return header, table


def run_experiment(spec: dict, out_dir, spec_text: str = "", workers: int = 1) -> Path:
    """Train every job of the experiment and write results.csv, jobs.csv, manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = spec_hash(spec)
    jobs = plan_jobs(spec)
    manifest = {"spec": spec, "spec_hash": h, "seed": spec["seed"], "kind": spec["kind"],
                "input_hash": git_blob_hash(spec_text), "jobs": len(jobs), "status": "running"}
    rows: list[dict] = []
    job_path = out / "jobs.csv"
    job_cols = None
    try:
        with open(job_path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            if workers > 1:
                pool = ProcessPoolExecutor(workers)
                results = pool.map(_run_job_star, [(spec, j) for j in jobs])
            else:
                pool = None
                results = (run_job(spec, j) for j in jobs)
            try:
                for job, row in zip(jobs, results):
                    log.info("finished %s: mae=%.3f", job, row["mae"])
                    if job_cols is None:
                        job_cols = list(row)
                        w.writerow(job_cols + ["status", "spec_hash"])
                    w.writerow([_fmt(row[c]) for c in job_cols] + ["ok", h])
                    f.flush()
                    rows.append(row)
            finally:
                if pool is not None:
                    pool.shutdown(cancel_futures=True)
    except BaseException as e:
        with open(job_path, "a", newline="") as f:
            csv.writer(f, lineterminator="\n").writerow(["FAILED", type(e).__name__, str(e), h])
        manifest.update(status="FAILED", error=f"{type(e).__name__}: {e}", completed_jobs=len(rows))
        _write_manifest(out, manifest)
        raise
    header, table = summarize(spec, rows)
    with open(out / "results.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header + ["spec_hash"])
        for r in table:
            w.writerow([_fmt(v) for v in r] + [h])
    manifest.update(status="ok", completed_jobs=len(rows))
    _write_manifest(out, manifest)
    return out / "results.csv"


def _write_manifest(out: Path, manifest: dict) -> None:
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def read_results(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
