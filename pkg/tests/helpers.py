"""Fixtures shared between the unit tests and the acceptance run."""
import numpy as np

from oracles import central_difference, relative_error
from sparsecount.model import ArchConfig, ModelParams, forward_trace
from sparsecount.pipeline import TrainConfig, scene_loss_and_grad
from sparsecount.synth import SynthConfig, generate_scene, sample_sparse


def small_problem(seed):
    """A random tiny architecture, scene and sparse annotation."""
    rng = np.random.default_rng(seed)
    stride = int(rng.choice([2, 4]))
    cells = int(rng.integers(2, 4))
    size = stride * cells
    arch = ArchConfig(height=size, width=size, stride=stride, anchors_per_cell=int(rng.choice([1, 4])),
                      channels1=int(rng.integers(1, 3)), channels2=int(rng.integers(1, 3)))
    scene = None
    while scene is None or not 0 < scene.count <= arch.grid().size:
        scene = generate_scene(SynthConfig(size, size, expected_count=float(rng.uniform(3, 8)),
                                           cluster_spread=1.5, seed=int(rng.integers(2**31))))
    ann = sample_sparse(scene, float(rng.uniform(0.3, 1.0)), int(rng.integers(2**31)))
    params = ModelParams.init(arch, int(rng.integers(2**31)), scale=float(rng.uniform(0.5, 2.0)))
    return arch, scene, ann, params


def full_loss_gradient_error(seed, epoch=None):
    """Max relative error between the analytic PMN+PRN loss gradient and
    central differences, with the matching and pseudo selection held fixed."""
    arch, scene, ann, params = small_problem(seed)
    rng = np.random.default_rng(seed + 1)
    # a low threshold late in the schedule keeps the pseudo set non-empty
    cfg = TrainConfig(epochs=10, weighted=bool(rng.integers(2)))
    t = 10 if epoch is None else epoch
    grid = arch.grid()
    _, grad, plan = scene_loss_and_grad(params, scene, ann, grid, t, cfg)

    w = cfg.weights

    def xent(conf, matched, pos_w, neg_w):
        neg = np.ones(len(conf), bool)
        neg[matched] = False
        return -(np.sum(pos_w * np.log(conf[matched])) + neg_w * np.sum(np.log(1 - conf[neg]))) / len(conf)

    def loss(v):
        # written out from the loss definitions, not via the pipeline
        pred = forward_trace(ModelParams(arch, v), scene, grid).pred
        pmn, prn = pred["pmn"], pred["prn"]
        m = plan.pmn_matches
        total = xent(pmn.confidences, m, 1.0, w.lambda2)
        total += w.lambda1 * np.mean(np.sum((ann.points - pmn.points[m]) ** 2, axis=1))
        m = plan.prn_matches
        total += xent(prn.confidences, m, plan.prn_weights, w.lambda_total)
        if len(m):
            total += w.lambda1 * np.mean(np.sum((plan.prn_targets - prn.points[m]) ** 2, axis=1))
        return total

    return relative_error(grad, central_difference(loss, params.vector)), plan
