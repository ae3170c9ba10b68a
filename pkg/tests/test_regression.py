from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import roots_hermitenorm

from diagbsde.regression import Basis, Projector, RampFeatures, design_matrix, multi_indices, project

X, W = roots_hermitenorm(60)
W = W / W.sum()


def test_multi_indices():
    assert len(multi_indices(1, 4)) == 5
    assert len(multi_indices(2, 4)) == 15
    assert multi_indices(2, 1) == [(0, 0), (1, 0), (0, 1)]
    assert len(multi_indices(3, 4)) == 1 + 3 * 4 + 3
    with pytest.raises(ValueError):
        multi_indices(1, -1)


@given(st.floats(-3, 3), st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.integers(0, 4))
def test_hermite_columns_are_martingales(b, t, gap, n):
    s = t + gap
    basis = Basis(1, 4)
    now = basis.raw(np.array([[b]]), t)[0, n]
    later = basis.raw((b + np.sqrt(gap) * X)[:, None], s)[:, n]
    assert np.dot(W, later) == pytest.approx(now, abs=1e-9 * (1 + abs(now)))


@given(st.floats(-4, 4), st.floats(0.0, 0.9), st.floats(0.1, 1.0))
def test_ramps_are_space_time_harmonic(b, frac, s):
    t = frac * s
    ramps = RampFeatures(1, 5, s)
    now = ramps.raw(np.array([[b]]), t)[0]
    later = ramps.raw((b + np.sqrt(s - t) * X)[:, None], s)
    assert np.allclose(W @ later, now, atol=1e-12)


def test_gradients_match_finite_differences():
    b = np.array([[0.3, -0.7], [1.1, 0.2]])
    h = 1e-6
    for feats in (Basis(2, 4), RampFeatures(2, 4, 0.8)):
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd = (feats.raw(b + e, 0.5) - feats.raw(b - e, 0.5)) / (2 * h)
            assert np.allclose(feats.raw(b, 0.5, grad=j), fd, atol=1e-6)


def test_ramps_empty_and_bounded():
    assert RampFeatures(1, 0, 1.0).raw(np.zeros((3, 1)), 0.5).shape == (3, 0)
    vals = RampFeatures(2, 7, 1.0).raw(np.random.default_rng(0).normal(size=(100, 2)) * 50, 0.2)
    assert vals.shape == (100, 14) and np.all((vals >= 0) & (vals <= 1))


def test_design_at_time_zero_is_constant():
    assert design_matrix(np.zeros((5, 2)), 0.0, 4).shape == (5, 1)


def test_projection_reproduces_polynomials():
    rng = np.random.default_rng(1)
    b = rng.normal(size=(500, 1))
    y = 1 + 2 * b[:, 0] - b[:, 0] ** 3
    assert np.allclose(project(b, 1.0, y, 4), y, atol=1e-9)


def test_projection_is_idempotent():
    rng = np.random.default_rng(2)
    P = Projector.fit(design_matrix(rng.normal(size=(300, 2)), 0.7, 3))
    v = rng.normal(size=300)
    assert np.allclose(P(P(v)), P(v), atol=1e-12)


def test_rank_deficient_design_drops_columns():
    b = np.ones((50, 1))
    P = Projector.fit(design_matrix(b, 1.0, 4))
    assert P.deficient and P.rank == 1
    coef = P.coef(np.full(50, 3.0))
    assert coef.shape == (5,)
    assert np.allclose(design_matrix(b, 1.0, 4) @ coef, 3.0)


def test_conditional_expectation_estimate():
    from diagbsde.paths import simulate

    e = simulate(0, 20000, 2, 1.0)
    b1, b2 = e.values[:, 1, :], e.values[:, 2, :]
    est = project(b1, 0.5, b2[:, 0] ** 2, 4)
    err = np.abs(est - (b1[:, 0] ** 2 + 0.5))
    assert err.mean() < 0.03
    assert err[np.abs(b1[:, 0]) < 1.0].max() < 0.1
