import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import central_difference, relative_error
from sparsecount.errors import ConfidenceClampWarning, ConfigError
from sparsecount.losses import (EPS, LossWeights, loc_grad, loc_loss, pmn_cls_grad, pmn_cls_loss,
                                prn_weighted_cls_grad, prn_weighted_cls_loss, total_loss)

LN_HALF = math.log(0.5)


def test_default_weights():
    w = LossWeights()
    assert (w.lambda_total, w.lambda1, w.lambda2) == (0.4, 0.05, 0.4)


def test_weights_non_negative():
    with pytest.raises(ConfigError):
        LossWeights(lambda1=-0.1)


def test_pmn_cls_perfect_prediction():
    assert pmn_cls_loss([1 - EPS, EPS], [0], 0.4) == pytest.approx(0.0, abs=1e-6)


def test_pmn_cls_hand_value():
    value = pmn_cls_loss([0.5, 0.5], [0], 0.4)
    assert value == pytest.approx(-(LN_HALF + 0.4 * LN_HALF) / 2, abs=1e-12)
    assert round(value, 4) == 0.4852


def test_pmn_cls_monotone_in_matched_confidence():
    lo = pmn_cls_loss([0.3, 0.2, 0.6], [0], 0.4)
    hi = pmn_cls_loss([0.4, 0.2, 0.6], [0], 0.4)
    assert hi < lo


def test_pmn_cls_clamps_and_flags():
    with pytest.warns(ConfidenceClampWarning):
        v = pmn_cls_loss([1.0, 0.0], [0], 0.4)
    assert math.isfinite(v) and v >= 0


def test_pmn_cls_rejects_duplicate_matches():
    with pytest.raises(ValueError):
        pmn_cls_loss([0.5, 0.5], [0, 0], 0.4)


def test_loc_loss_coincident():
    pts = [[1.0, 2.0], [3.5, -1.0]]
    assert loc_loss(pts, pts) == 0.0


def test_loc_loss_hand_value():
    assert loc_loss([[0, 0]], [[3, 4]]) == 25.0


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=2, max_size=10))
def test_loc_loss_homogeneous_degree_two(coords):
    a = np.array(coords[: len(coords) // 2])
    b = np.array(coords[len(coords) // 2: 2 * (len(coords) // 2)])
    assert loc_loss(2 * a, 2 * b) == pytest.approx(4 * loc_loss(a, b), rel=1e-12, abs=1e-12)


def test_loc_loss_empty():
    with pytest.raises(ValueError):
        loc_loss(np.zeros((0, 2)), np.zeros((0, 2)))


def test_total_loss_values():
    assert total_loss(1.0, 0.0, 0.05) == 1.0
    assert total_loss(0.4852, 25.0, 0.05) == pytest.approx(1.7352, abs=1e-12)
    assert total_loss(0.7, 9.0, 0.0) == 0.7


def test_prn_reduces_to_pmn_with_unit_weights():
    rng = np.random.default_rng(0)
    c = rng.uniform(0.01, 0.99, 20)
    m = [3, 7, 11]
    assert prn_weighted_cls_loss(c, m, np.ones(3), 0.4) == pytest.approx(pmn_cls_loss(c, m, 0.4), abs=1e-15)


def test_prn_zero_weights_drop_positive_term():
    c = np.array([0.2, 0.7, 0.4])
    expected = -0.4 * (math.log(1 - 0.7) + math.log(1 - 0.4)) / 3
    assert prn_weighted_cls_loss(c, [0], [0.0], 0.4) == pytest.approx(expected, abs=1e-15)


def test_prn_hand_value():
    value = prn_weighted_cls_loss([0.5, 0.5], [0], [0.8], 0.4)
    assert value == pytest.approx(-(0.8 * LN_HALF + 0.4 * LN_HALF) / 2, abs=1e-12)
    assert round(value, 4) == 0.4159


def test_prn_rejects_bad_weight():
    with pytest.raises(ValueError):
        prn_weighted_cls_loss([0.5, 0.5], [0], [1.2], 0.4)


@settings(max_examples=50)
@given(st.floats(0.01, 0.99), st.floats(0, 1), st.floats(0, 1))
def test_prn_monotone_in_weight(c0, w1, w2):
    lo, hi = sorted((w1, w2))
    assert prn_weighted_cls_loss([c0, 0.3], [0], [lo], 0.4) <= prn_weighted_cls_loss([c0, 0.3], [0], [hi], 0.4)


@settings(max_examples=50)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=12))
def test_cls_losses_nonnegative_and_finite(conf):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConfidenceClampWarning)
        v = pmn_cls_loss(conf, [0, 1], 0.4)
        u = prn_weighted_cls_loss(conf, [2], [0.5], 0.4)
    assert math.isfinite(v) and v >= 0
    assert math.isfinite(u) and u >= 0


def test_pmn_cls_grad_closed_form_and_fd():
    rng = np.random.default_rng(1)
    M = 15
    c = rng.uniform(0.05, 0.95, M)
    m = np.array([1, 4, 9])
    g = pmn_cls_grad(c, m, 0.4)
    expected = 0.4 / (M * (1 - c))
    expected[m] = -1 / (M * c[m])
    assert np.allclose(g, expected, rtol=1e-14)
    fd = central_difference(lambda x: pmn_cls_loss(x, m, 0.4), c, h=1e-6)
    assert relative_error(g, fd) < 1e-6


def test_prn_cls_grad_fd():
    rng = np.random.default_rng(2)
    c = rng.uniform(0.05, 0.95, 12)
    m, w = np.array([0, 5]), np.array([0.3, 0.9])
    fd = central_difference(lambda x: prn_weighted_cls_loss(x, m, w, 0.4), c, h=1e-6)
    assert relative_error(prn_weighted_cls_grad(c, m, w, 0.4), fd) < 1e-6


def test_loc_grad_fd():
    rng = np.random.default_rng(3)
    t, p = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
    fd = central_difference(lambda x: loc_loss(t, x.reshape(4, 2)), p.ravel(), h=1e-6)
    assert relative_error(loc_grad(t, p).ravel(), fd) < 1e-6
