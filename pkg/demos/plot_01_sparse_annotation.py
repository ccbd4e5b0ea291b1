"""
Sparse annotation and proposal matching
=======================================

A synthetic crowd scene is a set of head points plus a blurred intensity
image. Only a random fraction of the heads gets labeled. The matching head
of the network sees a grid of anchor proposals and pairs every labeled head
with one proposal; everything else is a negative.
"""

import numpy as np

from sparsecount.assignment import build_cost, solve_assignment
from sparsecount.model import ArchConfig, ModelParams, forward
from sparsecount.synth import SynthConfig, annotation_budget, generate_scene, sample_sparse

scene = generate_scene(SynthConfig(seed=4))
print(f"{scene.count} heads on a {scene.height}x{scene.width} grid")

###############################################################################
# The budget is rounded half-up and never drops below one head.

for ratio in (1.0, 0.6, 0.2, 0.01):
    print(f"ratio {ratio:4}: {annotation_budget(ratio, scene.count)} labeled")

ann = sample_sparse(scene, 0.6, seed=0)
print("labeled indices:", ann.indices)

###############################################################################
# An untrained model still produces one confidence and offset per anchor.
# The cost of pairing head i with proposal j is nu * distance - confidence.

arch = ArchConfig()
params = ModelParams.init(arch, seed=0)
pred = forward(params, scene, arch.grid(), "pmn")
cost = build_cost(ann.points, pred.points, pred.confidences, nu=0.05)
match = solve_assignment(cost)
print(f"{arch.grid().size} proposals, {len(match.matches)} matched, {len(match.unmatched)} negatives")

d = np.linalg.norm(ann.points - pred.points[match.matches], axis=1)
print(f"mean head-to-proposal distance {d.mean():.2f}, worst {d.max():.2f}")
