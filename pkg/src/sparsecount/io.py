"""Plain-text storage for scenes and annotation sets.

One object per file. Floats are written with ``repr`` so a write/read cycle
is lossless. Layout of a scene file::

    # sparsecount scene v1
    height 32
    width 32
    seed 7
    count 3
    points
    12.25 3.5
    ...
    intensity
    <height lines of width space-separated values>

An annotation file has the same shape with ``protocol``, ``target_ratio``,
``realized_ratio``, ``seed`` and ``patch`` header lines, and one
``index x y`` line per annotated point.
"""
from __future__ import annotations

import os

import numpy as np

from .types import AnnotationSet, Protocol, Scene

SCENE_MAGIC = "# sparsecount scene v1"
ANNOTATION_MAGIC = "# sparsecount annotation v1"


def _fmt(v: float) -> str:
    return repr(float(v))


def scene_to_text(scene: Scene) -> str:
    lines = [SCENE_MAGIC,
             f"height {scene.height}",
             f"width {scene.width}",
             f"seed {scene.seed}",
             f"count {scene.count}",
             "points"]
    lines += [f"{_fmt(x)} {_fmt(y)}" for x, y in scene.ground_truth]
    lines.append("intensity")
    lines += [" ".join(_fmt(v) for v in row) for row in scene.intensity]
    return "\n".join(lines) + "\n"


def _header(lines, names):
    values = {}
    for name, line in zip(names, lines):
        key, _, val = line.partition(" ")
        if key != name:
            raise ValueError(f"expected header field {name!r}, found {key!r}")
        values[name] = val
    return values


def scene_from_text(text: str) -> Scene:
    lines = text.splitlines()
    if not lines or lines[0] != SCENE_MAGIC:
        raise ValueError("not a scene file")
    h = _header(lines[1:5], ["height", "width", "seed", "count"])
    height, width, n = int(h["height"]), int(h["width"]), int(h["count"])
    if lines[5] != "points":
        raise ValueError("missing 'points' section")
    pts = [tuple(map(float, ln.split())) for ln in lines[6:6 + n]]
    if lines[6 + n] != "intensity":
        raise ValueError("missing 'intensity' section")
    grid = np.array([list(map(float, ln.split())) for ln in lines[7 + n:7 + n + height]])
    return Scene(height, width, grid.reshape(height, width),
                 np.array(pts).reshape(-1, 2), int(h["seed"]))


def annotation_to_text(ann: AnnotationSet) -> str:
    patch = "none" if ann.patch is None else " ".join(_fmt(v) for v in ann.patch)
    lines = [ANNOTATION_MAGIC,
             f"protocol {ann.protocol.value}",
             f"target_ratio {_fmt(ann.target_ratio)}",
             f"realized_ratio {_fmt(ann.realized_ratio)}",
             f"seed {ann.seed}",
             f"patch {patch}",
             f"count {ann.count}",
             "points"]
    lines += [f"{i} {_fmt(x)} {_fmt(y)}" for i, (x, y) in zip(ann.indices, ann.points)]
    return "\n".join(lines) + "\n"


def annotation_from_text(text: str) -> AnnotationSet:
    lines = text.splitlines()
    if not lines or lines[0] != ANNOTATION_MAGIC:
        raise ValueError("not an annotation file")
    h = _header(lines[1:7], ["protocol", "target_ratio", "realized_ratio", "seed", "patch", "count"])
    n = int(h["count"])
    rows = [ln.split() for ln in lines[8:8 + n]]
    patch = None if h["patch"] == "none" else tuple(map(float, h["patch"].split()))
    return AnnotationSet(
        points=np.array([[float(r[1]), float(r[2])] for r in rows]).reshape(-1, 2),
        indices=np.array([int(r[0]) for r in rows], dtype=np.int64),
        target_ratio=float(h["target_ratio"]),
        realized_ratio=float(h["realized_ratio"]),
        protocol=Protocol(h["protocol"]),
        patch=patch,
        seed=int(h["seed"]),
    )


def write_scene(path: str | os.PathLike, scene: Scene) -> None:
    with open(path, "w") as f:
        f.write(scene_to_text(scene))


def read_scene(path: str | os.PathLike) -> Scene:
    with open(path) as f:
        return scene_from_text(f.read())


def write_annotation(path: str | os.PathLike, ann: AnnotationSet) -> None:
    with open(path, "w") as f:
        f.write(annotation_to_text(ann))


def read_annotation(path: str | os.PathLike) -> AnnotationSet:
    with open(path) as f:
        return annotation_from_text(f.read())
