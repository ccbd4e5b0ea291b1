import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparsecount.errors import ConfigError
from sparsecount.synth import (DisturbanceSpec, SynthConfig, disturb_ratio, generate_scene,
                               sample_kcap, sample_partial, sample_sparse)
from sparsecount.types import Protocol, Scene


def scene_with(n, seed=0, size=32):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, size, size=(n, 2))
    return Scene(size, size, np.zeros((size, size)), pts, seed)


def test_single_splat_has_unit_mass():
    cfg = SynthConfig(32, 32, expected_count=1, render_sigma=1.0, cluster_spread=0.0,
                      seed=4, fixed_count=True)
    s = generate_scene(cfg)
    assert s.count == 1
    x, y = s.ground_truth[0]
    # mass beyond the border is lost; an interior splat keeps almost all of it
    if 4 < x < 28 and 4 < y < 28:
        assert s.intensity.sum() == pytest.approx(1.0, abs=1e-3)
    else:
        assert 0.2 < s.intensity.sum() <= 1.0 + 1e-3


def test_interior_splat_mass():
    from sparsecount.synth import render
    img = render(np.array([[16.3, 15.8]]), 32, 32, 1.0)
    assert img.sum() == pytest.approx(1.0, abs=1e-6)


def test_generate_is_deterministic():
    cfg = SynthConfig(seed=42)
    assert generate_scene(cfg) == generate_scene(cfg)


def test_generate_mean_count():
    counts = np.array([generate_scene(SynthConfig(expected_count=50, seed=s)).count for s in range(100)])
    se = counts.std(ddof=1) / math.sqrt(len(counts))
    assert abs(counts.mean() - 50) < 3 * se


def test_generate_rejects_zero_count():
    with pytest.raises(ConfigError, match="expected_count"):
        generate_scene(SynthConfig(expected_count=0))


def test_points_in_bounds_even_with_wide_clusters():
    s = generate_scene(SynthConfig(16, 16, 60, cluster_spread=40.0, seed=9))
    gt = s.ground_truth
    assert np.all((gt >= 0) & (gt[:, :1] < 16) & (gt[:, 1:] < 16))


def test_sparse_full_ratio_is_everything():
    s = scene_with(10)
    ann = sample_sparse(s, 1.0, seed=1)
    assert sorted(ann.indices.tolist()) == list(range(10))
    assert ann.realized_ratio == 1.0


def test_sparse_rounding():
    s = scene_with(10)
    ann = sample_sparse(s, 0.8, seed=1)
    assert ann.count == 8
    assert ann.is_subset_of(s)
    assert ann.protocol is Protocol.SPARSE
    assert ann.realized_ratio == 0.8


@pytest.mark.parametrize("ratio", [0.0, -0.1, 1.01])
def test_sparse_rejects_bad_ratio(ratio):
    with pytest.raises(ConfigError):
        sample_sparse(scene_with(5), ratio, seed=0)


def test_sparse_minimum_one():
    assert sample_sparse(scene_with(3), 0.01, seed=0).count == 1


def test_sparse_uniform_selection():
    s = scene_with(7)
    hits = np.zeros(7)
    for seed in range(2000):
        hits[sample_sparse(s, 0.5, seed).indices] += 1
    freq = hits / 2000
    # N^c = round-half-up(3.5) = 4, each point chosen w.p. 4/7
    sd = math.sqrt((4 / 7) * (3 / 7) / 2000)
    assert np.all(np.abs(freq - 4 / 7) < 4 * sd)


def test_sparse_deterministic():
    s = scene_with(20)
    assert sample_sparse(s, 0.3, 5) == sample_sparse(s, 0.3, 5)


def test_kcap_cap_not_binding():
    ann = sample_kcap(scene_with(5), 10, seed=0)
    assert ann.count == 5
    assert ann.protocol is Protocol.KCAP


def test_kcap_cap_binding():
    assert sample_kcap(scene_with(100), 10, seed=0).count == 10


def test_kcap_uniform():
    s = scene_with(12)
    hits = np.zeros(12)
    for seed in range(1500):
        hits[sample_kcap(s, 3, seed).indices] += 1
    freq = hits / 1500
    sd = math.sqrt(0.25 * 0.75 / 1500)
    assert np.all(np.abs(freq - 0.25) < 4 * sd)


def test_partial_full_ratio():
    s = scene_with(30)
    ann = sample_partial(s, 1.0, seed=0)
    assert ann.count == 30
    assert ann.patch == (0.0, 0.0, 32.0, 32.0)


def test_partial_area_on_uniform_grid():
    # one point at every pixel centre of a 40x40 scene
    xs, ys = np.meshgrid(np.arange(40) + 0.5, np.arange(40) + 0.5)
    s = Scene(40, 40, np.zeros((40, 40)), np.stack([xs.ravel(), ys.ravel()], 1))
    for seed in range(10):
        ann = sample_partial(s, 0.25, seed)
        x0, y0, x1, y1 = ann.patch
        assert (x1 - x0) * (y1 - y0) / 1600 == pytest.approx(0.25, abs=0.03)
        assert ann.count / s.count == pytest.approx(0.25, abs=0.03)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.floats(0.05, 1.0), st.integers(0, 1000))
def test_partial_points_inside_patch(n, ratio, seed):
    s = scene_with(n, seed)
    ann = sample_partial(s, ratio, seed)
    x0, y0, x1, y1 = ann.patch
    p = ann.points
    assert np.all((p[:, 0] >= x0) & (p[:, 0] < x1) & (p[:, 1] >= y0) & (p[:, 1] < y1))
    # every ground-truth point inside the patch is annotated
    gt = s.ground_truth
    inside = (gt[:, 0] >= x0) & (gt[:, 0] < x1) & (gt[:, 1] >= y0) & (gt[:, 1] < y1)
    assert inside.sum() == ann.count
    assert ann.protocol is Protocol.PARTIAL


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 50), st.floats(0.01, 1.0), st.integers(0, 1000), st.integers(1, 60))
def test_samplers_yield_duplicate_free_subsets(n, ratio, seed, k):
    s = scene_with(n, seed)
    for ann in (sample_sparse(s, ratio, seed), sample_partial(s, ratio, seed), sample_kcap(s, k, seed)):
        assert ann.is_subset_of(s)
        assert len(set(ann.indices.tolist())) == ann.count >= 1


def test_disturb_zero_variance_is_identity():
    assert disturb_ratio(0.8, DisturbanceSpec(0.0), seed=3) == 0.8


def test_disturb_variance_11_stays_within_ten_points():
    vals = [disturb_ratio(0.8, DisturbanceSpec(11.0), seed=s) for s in range(5000)]
    assert 0.70 <= min(vals) and max(vals) <= 0.90


def test_disturb_range_approaches_bound():
    vals = np.array([disturb_ratio(0.8, DisturbanceSpec(25.0), seed=s) for s in range(10_000)])
    assert vals.min() >= 0.65 - 1e-12 and vals.max() <= 0.95 + 1e-12
    assert vals.min() < 0.66 and vals.max() > 0.94


@settings(max_examples=200)
@given(st.floats(0.001, 1.0), st.floats(0, 5000), st.integers(0, 2**31))
def test_disturb_stays_in_unit_interval(base, var, seed):
    r = disturb_ratio(base, DisturbanceSpec(var), seed)
    assert 0 < r <= 1


def test_disturb_rejects_negative_variance():
    with pytest.raises(ConfigError):
        DisturbanceSpec(-1.0)
