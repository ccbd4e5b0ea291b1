"""
Running an experiment grid from a spec
======================================

Experiments are described by a small TOML file. Anything not written
there takes its default, and the manifest records the fully resolved
values so reruns are exact.
"""

import tempfile
from pathlib import Path

from sparsecount.experiments import load_spec, read_results, run_experiment

text = """
kind = "disturbance"
seed = 1

[dataset]
train_scenes = 8
test_scenes = 4

[train]
epochs = 3

[experiment]
ratios = [0.8]
variances = [0.0, 5.0, 25.0]
"""

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "dist.toml"
    path.write_text(text)
    spec, raw = load_spec(path)
    out = run_experiment(spec, Path(tmp) / "out", raw)
    for row in read_results(out):
        print(row["variance"], row["range_pp"], row["realized_ratio"], row["mae"])
    print((Path(tmp) / "out" / "manifest.json").read_text()[:300])
