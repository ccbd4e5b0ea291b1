"""Command line entry point: generate scenes, train, evaluate, run experiment grids."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .errors import ConfigError
from .evalkit import count_metrics, localization_metrics, write_count_csv, write_summary_json
from .io import read_annotation, read_scene, write_annotation, write_scene
from .model import load_params, save_params
from .pipeline import LOG_COLUMNS, infer_count, read_training_log, train

log = logging.getLogger("sparsecount")


def _spec(args) -> tuple[dict, str]:
    if args.spec is None:
        return ex.resolve_spec({}, args.seed), ""
    return ex.load_spec(args.spec, args.seed)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _annotations(spec, scenes):
    run = spec["run"]
    k = run["k"]
    return ex.annotate(scenes, run["protocol"], run["ratio"], k, (spec["seed"], 0, 3, 0, 0))


def cmd_generate(args) -> int:
    spec, _ = _spec(args)
    out = _out(args)
    train_scenes, test_scenes = ex.make_scenes(spec, 0)
    anns = _annotations(spec, train_scenes)
    for split, scenes in (("train", train_scenes), ("test", test_scenes)):
        (out / split).mkdir(exist_ok=True)
        for i, s in enumerate(scenes):
            write_scene(out / split / f"scene_{i:04d}.txt", s)
    for i, a in enumerate(anns):
        write_annotation(out / "train" / f"annotation_{i:04d}.txt", a)
    print(f"wrote {len(train_scenes)} train and {len(test_scenes)} test scenes to {out}")
    return 0


def _load_split(data: Path, split: str):
    scenes = [read_scene(p) for p in sorted((data / split).glob("scene_*.txt"))]
    if not scenes:
        raise FileNotFoundError(f"no scenes under {data / split}")
    return scenes


def cmd_train(args) -> int:
    spec, text = _spec(args)
    out = _out(args)
    if args.data:
        data = Path(args.data)
        scenes = _load_split(data, "train")
        anns = [read_annotation(p) for p in sorted((data / "train").glob("annotation_*.txt"))]
    else:
        scenes, _ = ex.make_scenes(spec, 0)
        anns = _annotations(spec, scenes)
    arch = ex.arch_config(spec)
    cfg = ex.train_config(spec, spec["run"]["variant"], ex.derive_seed(spec["seed"], 0, 4))
    params, reports = train(scenes, anns, arch, cfg, log_path=out / "train_log.csv")
    save_params(out / "model.bin", params)
    with open(out / "train_config.json", "w") as f:
        json.dump({"spec": spec, "spec_hash": ex.spec_hash(spec), "input_hash": ex.git_blob_hash(text)},
                  f, indent=2, sort_keys=True)
        f.write("\n")
    last = reports[-1]
    print(f"trained {len(reports)} steps; final total loss {last.total:.4f}, N^s {last.n_pseudo:.1f}")
    return 0


def cmd_eval(args) -> int:
    spec, _ = _spec(args)
    out = _out(args)
    params = load_params(args.model)
    if args.data:
        scenes = _load_split(Path(args.data), "test")
    else:
        _, scenes = ex.make_scenes(spec, 0)
    cfg = ex.train_config(spec, spec["run"]["variant"], 0)
    grid = params.arch.grid()
    pairs, names = [], []
    loc = {s: [0, 0, 0] for s in spec["experiment"]["sigmas"]}
    for i, s in enumerate(scenes):
        n, pts = infer_count(params, s, grid, cfg)
        pairs.append((s.count, n))
        names.append(f"scene_{i:04d}")
        for sigma, acc in loc.items():
            acc[0] += localization_metrics(pts, s.ground_truth, sigma).tp
            acc[1] += len(pts)
            acc[2] += s.count
    report = count_metrics(pairs)
    write_count_csv(out / "counts.csv", names, report)
    summary = {"mae": report.mae, "mse": report.mse, "scenes": len(scenes), "spec_hash": ex.spec_hash(spec)}
    for sigma, (tp, npred, ntrue) in loc.items():
        p = tp / npred if npred else 0.0
        r = tp / ntrue if ntrue else 0.0
        summary[f"sigma={sigma:g}"] = {"precision": p, "recall": r, "f1": 2 * p * r / (p + r) if p + r else 0.0}
    write_summary_json(out / "summary.json", summary)
    print(f"MAE {report.mae:.3f}  MSE {report.mse:.3f}  over {len(scenes)} scenes")
    return 0


def cmd_experiment(args) -> int:
    spec, text = _spec(args)
    path = ex.run_experiment(spec, _out(args), text, workers=args.workers)
    print(path.read_text(), end="")
    return 0


def cmd_inspect_log(args) -> int:
    rows = read_training_log(args.log)
    if not rows:
        print("empty log")
        return 1
    if list(rows[0]) != LOG_COLUMNS:
        print(f"unexpected columns {list(rows[0])}", file=sys.stderr)
        return 1
    by_epoch: dict[int, list[dict]] = {}
    for r in rows:
        by_epoch.setdefault(int(r["epoch"]), []).append(r)
    print("epoch  steps  total     pmn_cls   prn_cls   N^s     threshold")
    for t, grp in by_epoch.items():
        mean = {k: np.mean([float(g[k]) for g in grp]) for k in ("total", "pmn_cls", "prn_cls", "N^s")}
        print(f"{t:5d}  {len(grp):5d}  {mean['total']:.4f}  {mean['pmn_cls']:.4f}  {mean['prn_cls']:.4f}"
              f"  {mean['N^s']:6.1f}  {float(grp[-1]['threshold']):.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsecount", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, out=True):
        sp.add_argument("--spec", help="TOML experiment spec; built-in defaults when omitted")
        sp.add_argument("--seed", type=int, help="override the seed in the spec file")
        if out:
            sp.add_argument("--out", required=True, help="output directory")
        return sp

    common(sub.add_parser("generate", help="write synthetic scenes and annotations")).set_defaults(fn=cmd_generate)
    sp = common(sub.add_parser("train", help="train the [run] variant"))
    sp.add_argument("--data", help="directory written by `generate`; regenerated from the spec file otherwise")
    sp.set_defaults(fn=cmd_train)
    sp = common(sub.add_parser("eval", help="count and localize test scenes with a trained model"))
    sp.add_argument("--model", required=True)
    sp.add_argument("--data")
    sp.set_defaults(fn=cmd_eval)
    sp = common(sub.add_parser("experiment", help="run a full experiment grid"))
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(fn=cmd_experiment)
    sp = sub.add_parser("inspect-log", help="per-epoch summary of a training log")
    sp.add_argument("log")
    sp.set_defaults(fn=cmd_inspect_log)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
