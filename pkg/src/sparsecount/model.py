"""Point proposals and the compact two-head point network.

Architecture, for an ``H x W`` intensity grid, stride ``s`` and ``K`` anchors
per cell::

    x   = input_scale * intensity                          (1, H, W)
    h1  = tanh(conv3x3(x) + b1)                            (C1, H, W)
    h2  = tanh(conv_{2s x 2s, stride s, pad s/2}(h1) + b2)  (C2, H/s, W/s)
    per head (PMN, PRN), from the shared h2:
      logits  = conv3x3(h2)                                (2K, H/s, W/s)
      raw_off = conv3x3(h2)                                (2K, H/s, W/s)
      conf    = softmax over (logits[2k], logits[2k+1])[1]
      offset  = s * tanh(raw_off[2k], raw_off[2k+1])

Channel ``2k`` / ``2k+1`` of a head map are (background, foreground) logits,
or (dx, dy), for anchor ``k`` of the cell. Proposal ``j`` is
``(cell_row * (W/s) + cell_col) * K + k``.

Parameters live in one flat float64 vector; :data:`ModelParams.layout`
lists the ``(name, shape)`` blocks in storage order.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError
from .types import Scene

HEADS = ("pmn", "prn")


@dataclass(frozen=True, eq=False)
class ProposalGrid:
    stride: int
    anchors_per_cell: int
    height: int
    width: int
    anchors: np.ndarray

    @property
    def size(self) -> int:
        return len(self.anchors)

    @property
    def cells(self) -> tuple[int, int]:
        return self.height // self.stride, self.width // self.stride


def generate_proposals(height: int, width: int, stride: int = 4, anchors_per_cell: int = 4) -> ProposalGrid:
    """Anchors at the centres of a sqrt(K) x sqrt(K) subgrid of every s x s cell."""
    if stride < 1 or height % stride or width % stride:
        raise ConfigError("stride", f"{stride} must divide height {height} and width {width}")
    side = math.isqrt(anchors_per_cell)
    if anchors_per_cell < 1 or side * side != anchors_per_cell:
        raise ConfigError("anchors_per_cell", f"{anchors_per_cell} is not a perfect square")
    step = stride / side
    sub = (np.arange(side) + 0.5) * step
    sy, sx = np.meshgrid(sub, sub, indexing="ij")
    sub_xy = np.stack([sx.ravel(), sy.ravel()], axis=1)
    cy, cx = np.meshgrid(np.arange(height // stride) * stride,
                         np.arange(width // stride) * stride, indexing="ij")
    origin = np.stack([cx.ravel(), cy.ravel()], axis=1).astype(np.float64)
    anchors = (origin[:, None, :] + sub_xy[None, :, :]).reshape(-1, 2)
    anchors.setflags(write=False)
    return ProposalGrid(stride, anchors_per_cell, height, width, anchors)


@dataclass(frozen=True)
class ArchConfig:
    height: int = 32
    width: int = 32
    stride: int = 4
    anchors_per_cell: int = 4
    channels1: int = 8
    channels2: int = 16
    input_scale: float = 6.0

    def validate(self) -> None:
        generate_proposals(self.height, self.width, self.stride, self.anchors_per_cell)
        if self.stride % 2:
            raise ConfigError("stride", "must be even (the cell window is padded by stride/2)")
        if self.channels1 < 1 or self.channels2 < 1:
            raise ConfigError("channels", "must be positive")

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        c1, c2, s, k2 = self.channels1, self.channels2, self.stride, 2 * self.anchors_per_cell
        blocks = [("conv1.w", (c1, 1, 3, 3)), ("conv1.b", (c1,)),
                  ("conv2.w", (c2, c1, 2 * s, 2 * s)), ("conv2.b", (c2,))]
        for head in HEADS:
            blocks += [(f"{head}.cls.w", (k2, c2, 3, 3)), (f"{head}.cls.b", (k2,)),
                       (f"{head}.reg.w", (k2, c2, 3, 3)), (f"{head}.reg.b", (k2,))]
        return blocks

    def num_params(self) -> int:
        return sum(math.prod(shape) for _, shape in self.layout())

    def grid(self) -> ProposalGrid:
        return generate_proposals(self.height, self.width, self.stride, self.anchors_per_cell)


class ModelParams:
    """Flat parameter vector plus named views into it."""

    def __init__(self, arch: ArchConfig, vector: np.ndarray | None = None):
        arch.validate()
        self.arch = arch
        n = arch.num_params()
        if vector is None:
            vector = np.zeros(n)
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (n,):
            raise ValueError(f"parameter vector has shape {vector.shape}, expected ({n},)")
        if not np.all(np.isfinite(vector)):
            raise ValueError("parameters must be finite")
        self.vector = vector

    @classmethod
    def init(cls, arch: ArchConfig, seed: int, scale: float = 1.0) -> "ModelParams":
        """Gaussian weights with std scale/sqrt(fan_in); zero biases."""
        rng = np.random.default_rng(seed)
        parts = []
        for name, shape in arch.layout():
            if name.endswith(".b"):
                parts.append(np.zeros(math.prod(shape)))
            else:
                fan_in = math.prod(shape[1:])
                parts.append(rng.normal(0, scale / math.sqrt(fan_in), size=math.prod(shape)))
        return cls(arch, np.concatenate(parts))

    def views(self, vector: np.ndarray | None = None) -> dict[str, np.ndarray]:
        vector = self.vector if vector is None else vector
        out, i = {}, 0
        for name, shape in self.arch.layout():
            n = math.prod(shape)
            out[name] = vector[i:i + n].reshape(shape)
            i += n
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, self.vector.copy())


@dataclass(frozen=True, eq=False)
class Prediction:
    confidences: np.ndarray
    offsets: np.ndarray
    points: np.ndarray


# -- convolution helpers -----------------------------------------------------

def _im2col(x, k, stride, pad):
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    cin, ho, wo = win.shape[:3]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, cin * k * k)
    return cols, (ho, wo), xp.shape


def _conv(x, w, b, stride, pad):
    cout, _, k, _ = w.shape
    cols, (ho, wo), xp_shape = _im2col(x, k, stride, pad)
    out = (cols @ w.reshape(cout, -1).T + b).T.reshape(cout, ho, wo)
    return out, (cols, xp_shape)


def _conv_backward(dout, w, cache, stride, pad, need_dx=True):
    cols, xp_shape = cache
    cout, cin, k, _ = w.shape
    d2 = dout.reshape(cout, -1)
    dw = (d2 @ cols).reshape(w.shape)
    db = d2.sum(axis=1)
    if not need_dx:
        return None, dw, db
    _, ho, wo = dout.shape
    dcols = (d2.T @ w.reshape(cout, -1)).reshape(ho, wo, cin, k, k)
    dxp = np.zeros(xp_shape)
    for a in range(k):
        for c in range(k):
            dxp[:, a:a + stride * ho:stride, c:c + stride * wo:stride] += dcols[:, :, :, a, c].transpose(2, 0, 1)
    if pad:
        dxp = dxp[:, pad:-pad, pad:-pad]
    return dxp, dw, db


def _to_proposals(head_map, K):
    # (2K, Hc, Wc) -> (Hc*Wc*K, 2), pairs (channel 2k, 2k+1)
    c2, hc, wc = head_map.shape
    return head_map.reshape(K, 2, hc, wc).transpose(2, 3, 0, 1).reshape(-1, 2)


def _from_proposals(pairs, K, hc, wc):
    return pairs.reshape(hc, wc, K, 2).transpose(2, 3, 0, 1).reshape(2 * K, hc, wc)


def _sigmoid(z):
    return np.where(z >= 0, 1 / (1 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1 + np.exp(-np.abs(z))))


# -- forward / backward ------------------------------------------------------

class _Trace:
    """Activations of one forward pass, kept for the backward pass."""

    __slots__ = ("h1", "c1", "h2", "c2", "heads", "pred")


def _check(params: ModelParams, scene: Scene, grid: ProposalGrid):
    a = params.arch
    if (scene.height, scene.width) != (a.height, a.width):
        raise ValueError(f"scene is {scene.height}x{scene.width}, model expects {a.height}x{a.width}")
    if (grid.height, grid.width, grid.stride, grid.anchors_per_cell) != (
            a.height, a.width, a.stride, a.anchors_per_cell):
        raise ValueError("proposal grid does not match the model architecture")


def forward_trace(params: ModelParams, scene: Scene, grid: ProposalGrid, heads=HEADS) -> _Trace:
    _check(params, scene, grid)
    a, p = params.arch, params.views()
    s, K = a.stride, a.anchors_per_cell
    x = (a.input_scale * scene.intensity)[None]
    z1, c1 = _conv(x, p["conv1.w"], p["conv1.b"], 1, 1)
    h1 = np.tanh(z1)
    z2, c2 = _conv(h1, p["conv2.w"], p["conv2.b"], s, s // 2)
    h2 = np.tanh(z2)
    t = _Trace()
    t.h1, t.c1, t.h2, t.c2 = h1, c1, h2, c2
    t.heads, t.pred = {}, {}
    for head in heads:
        logits, cc = _conv(h2, p[f"{head}.cls.w"], p[f"{head}.cls.b"], 1, 1)
        raw, cr = _conv(h2, p[f"{head}.reg.w"], p[f"{head}.reg.b"], 1, 1)
        lp = _to_proposals(logits, K)
        conf = _sigmoid(lp[:, 1] - lp[:, 0])
        th = np.tanh(_to_proposals(raw, K))
        off = s * th
        t.heads[head] = (cc, cr, conf, th)
        t.pred[head] = Prediction(conf, off, grid.anchors + off)
    return t


def forward(params: ModelParams, scene: Scene, grid: ProposalGrid, head: str = "pmn") -> Prediction:
    if head not in HEADS:
        raise ValueError(f"unknown head {head!r}")
    return forward_trace(params, scene, grid, heads=(head,)).pred[head]


def backward_trace(params: ModelParams, trace: _Trace,
                   output_grads: Mapping[str, tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Parameter gradient given dLoss/dconfidence and dLoss/doffset per head."""
    a = params.arch
    s, K = a.stride, a.anchors_per_cell
    hc, wc = a.height // s, a.width // s
    M = hc * wc * K
    grad = np.zeros_like(params.vector)
    g = params.views(grad)
    w = params.views()
    dh2 = np.zeros_like(trace.h2)
    for head, (dconf, doff) in output_grads.items():
        if head not in trace.heads:
            raise ValueError(f"head {head!r} was not evaluated in this trace")
        dconf = np.asarray(dconf, dtype=np.float64).reshape(-1)
        doff = np.asarray(doff, dtype=np.float64)
        if dconf.shape != (M,) or doff.shape != (M, 2):
            raise ValueError(f"output gradients must have shapes ({M},) and ({M}, 2)")
        cc, cr, conf, th = trace.heads[head]
        dz = dconf * conf * (1 - conf)
        dlogits = _from_proposals(np.stack([-dz, dz], axis=1), K, hc, wc)
        draw = _from_proposals(doff * s * (1 - th ** 2), K, hc, wc)
        dx, dw, db = _conv_backward(dlogits, w[f"{head}.cls.w"], cc, 1, 1)
        g[f"{head}.cls.w"][...] += dw
        g[f"{head}.cls.b"][...] += db
        dh2 += dx
        dx, dw, db = _conv_backward(draw, w[f"{head}.reg.w"], cr, 1, 1)
        g[f"{head}.reg.w"][...] += dw
        g[f"{head}.reg.b"][...] += db
        dh2 += dx
    dz2 = dh2 * (1 - trace.h2 ** 2)
    dh1, dw, db = _conv_backward(dz2, w["conv2.w"], trace.c2, s, s // 2)
    g["conv2.w"][...] += dw
    g["conv2.b"][...] += db
    dz1 = dh1 * (1 - trace.h1 ** 2)
    _, dw, db = _conv_backward(dz1, w["conv1.w"], trace.c1, 1, 1, need_dx=False)
    g["conv1.w"][...] += dw
    g["conv1.b"][...] += db
    return grad


def backward(params: ModelParams, scene: Scene, grid: ProposalGrid,
             output_grads: Mapping[str, tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    trace = forward_trace(params, scene, grid, heads=tuple(output_grads))
    return backward_trace(params, trace, output_grads)


# -- persistence ---------------------------------------------------------------

PARAMS_MAGIC = b"SPCMODEL"
PARAMS_VERSION = 1


def save_params(path, params: ModelParams) -> None:
    """Binary layout: magic, uint32 version, uint32 header length, JSON
    architecture header, then the float64 little-endian parameter vector."""
    header = json.dumps(asdict(params.arch), sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(PARAMS_MAGIC)
        f.write(struct.pack("<II", PARAMS_VERSION, len(header)))
        f.write(header)
        f.write(params.vector.astype("<f8").tobytes())


def load_params(path) -> ModelParams:
    with open(path, "rb") as f:
        if f.read(len(PARAMS_MAGIC)) != PARAMS_MAGIC:
            raise ValueError(f"{path} is not a parameter file")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != PARAMS_VERSION:
            raise ValueError(f"unsupported parameter file version {version}")
        arch = ArchConfig(**json.loads(f.read(hlen)))
        vec = np.frombuffer(f.read(), dtype="<f8").astype(np.float64)
    return ModelParams(arch, vec)
