import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import prox_oracle

from dpgossip.learning import (
    auto_schedule, clip_l2, hinge_loss, hinge_subgradient, mirror_map, soft_threshold,
)

finite = st.floats(-50, 50, allow_nan=False)


def test_mirror_map_identity():
    np.testing.assert_array_equal(mirror_map(np.zeros(3)), np.zeros(3))
    np.testing.assert_array_equal(mirror_map([1.5, -2, 0.25]), [1.5, -2, 0.25])
    with pytest.raises(ValueError):
        mirror_map([np.nan])


def test_soft_threshold_examples():
    np.testing.assert_allclose(soft_threshold(np.array([0.5, -0.2, 1.3]), 0.3), [0.2, 0.0, 1.0], atol=1e-15)
    p = np.array([1.0, -3.0, 0.0])
    np.testing.assert_array_equal(soft_threshold(p, 0.0), p)
    with pytest.raises(ValueError):
        soft_threshold(p, -0.1)


def test_soft_threshold_matches_numeric_prox():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = rng.integers(1, 9)
        p = rng.normal(scale=2.0, size=n)
        lam = rng.exponential(1.0)
        np.testing.assert_allclose(soft_threshold(p, lam), prox_oracle(p, lam), atol=1e-8)


@settings(max_examples=200)
@given(arrays(float, st.integers(1, 8), elements=finite), st.floats(0, 20))
def test_soft_threshold_properties(p, lam):
    w = soft_threshold(p, lam)
    assert np.all(np.abs(w) <= np.abs(p))
    assert np.all(w * p >= 0)
    assert np.all((np.abs(p) <= lam) <= (w == 0))
    # nonexpansive
    q = p + 0.5
    assert np.linalg.norm(soft_threshold(q, lam) - w) <= np.linalg.norm(q - p) + 1e-12


def test_hinge_examples():
    x = np.array([0.3, -0.7])
    assert hinge_loss(np.zeros(2), x, 1) == 1.0
    assert hinge_loss(np.zeros(2), x, -1) == 1.0
    assert hinge_loss(np.array([2.0, 0.0]), np.array([1.0, 0.0]), 1) == 0.0
    assert hinge_loss(np.array([1.0, 0.0]), np.array([0.5, 0.5]), -1) == 1.5
    np.testing.assert_array_equal(hinge_subgradient(np.array([2.0, 0.0]), np.array([1.0, 0.0]), 1), [0, 0])
    np.testing.assert_array_equal(hinge_subgradient(np.array([1.0, 0.0]), np.array([0.5, 0.5]), -1), [0.5, 0.5])
    # exactly at the kink the zero subgradient is chosen
    np.testing.assert_array_equal(hinge_subgradient(np.array([1.0, 0.0]), np.array([1.0, 0.0]), 1), [0, 0])


def test_hinge_rejects_bad_inputs():
    with pytest.raises(ValueError):
        hinge_loss(np.zeros(2), np.zeros(3), 1)
    with pytest.raises(ValueError):
        hinge_loss(np.zeros(2), np.zeros(2), 0)


def test_subgradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    checked = 0
    h = 1e-6
    while checked < 500:
        n = rng.integers(1, 6)
        w, x = rng.normal(size=n), rng.normal(size=n)
        y = rng.choice([-1, 1])
        if abs(y * w @ x - 1) <= 0.01:
            continue
        fd = np.array([
            (hinge_loss(w + h * e, x, y) - hinge_loss(w - h * e, x, y)) / (2 * h) for e in np.eye(n)
        ])
        np.testing.assert_allclose(hinge_subgradient(w, x, y), fd, atol=1e-6)
        checked += 1


@settings(max_examples=100)
@given(arrays(float, 4, elements=finite), arrays(float, 4, elements=finite), st.sampled_from([-1, 1]))
def test_subgradient_inequality(w, x, y):
    g = hinge_subgradient(w, x, y)
    v = w + 1.0
    assert hinge_loss(v, x, y) >= hinge_loss(w, x, y) + g @ (v - w) - 1e-6 * (1 + np.abs(x).sum())
    assert np.linalg.norm(g) <= np.linalg.norm(x) + 1e-12


def test_auto_schedule_values():
    assert auto_schedule(2, 1, 0, 1, 100).alpha == pytest.approx(0.1)
    s = auto_schedule(2, 1, 0.1, 4, 100)
    assert s.alpha == pytest.approx(2 / (2 * math.sqrt(440)))
    assert s.alpha == pytest.approx(0.04767, abs=1e-5)
    assert s.lambda_t == pytest.approx(0.1 * s.alpha)
    assert auto_schedule(2, 1, 0.1, 4, 400).alpha == pytest.approx(s.alpha / 2)


@pytest.mark.parametrize("args", [(0, 1, 0, 1, 1), (1, 0, 0, 1, 1), (1, 1, -1, 1, 1), (1, 1, 0, 0, 1), (1, 1, 0, 1, 0)])
def test_auto_schedule_rejects(args):
    with pytest.raises(ValueError):
        auto_schedule(*args)


def test_clip_l2():
    w = np.array([3.0, 4.0])
    np.testing.assert_allclose(clip_l2(w, 1.0), [0.6, 0.8])
    assert clip_l2(w, 10.0) is w
