import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from frem.bridge.transform import (TransformH, compute_transform, inverse_sqrt, transform_alpha,
                                   unit_ball_volume)
from frem.bridge.transform import regularized_covariance


def test_alpha_hand_values():
    assert transform_alpha(100, 2) == pytest.approx(math.sqrt(100 / math.pi) / 3, rel=1e-15)
    assert transform_alpha(100, 2) == pytest.approx(1.8806, abs=1e-4)
    assert transform_alpha(12, 1) == pytest.approx(2.0, rel=1e-15)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_identity_covariance_gives_scaled_identity():
    W = inverse_sqrt(np.eye(2))
    H = TransformH(W, transform_alpha(100, 2))
    np.testing.assert_allclose(H.matrix, 1.8806 * np.eye(2), atol=1e-4)
    assert H.expanded(1.5).zeta == 1.5
    np.testing.assert_allclose(H.expanded(1.5).matrix, 1.5 * H.matrix)


@given(st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_whitening_is_symmetric_inverse_root(d, seed):
    g = np.random.default_rng(seed)
    A = g.normal(size=(d, d))
    S = A @ A.T + 0.5 * np.eye(d)
    W = inverse_sqrt(S)
    np.testing.assert_allclose(W, W.T, atol=1e-12)
    np.testing.assert_allclose(W @ S @ W, np.eye(d), atol=1e-9)
    assert np.all(np.linalg.eigvalsh(W) > 0)


def test_regularization_lifts_rank_deficiency():
    g = np.random.default_rng(1)
    u = g.normal(size=200)
    X = np.column_stack([u, 2 * u])  # perfectly correlated
    assert inverse_sqrt(np.cov(X, rowvar=False)) is None
    assert compute_transform(X, 100, c_reg=1.0) is not None
    assert compute_transform(X, 100, c_reg=0.0) is None


def test_constant_coordinate_is_singular():
    X = np.column_stack([np.arange(10.0), np.full(10, 3.0)])
    assert compute_transform(X, 10) is None
    assert compute_transform(np.ones((1, 2)), 10) is None


def test_transformed_cloud_is_whitened():
    g = np.random.default_rng(4)
    X = g.multivariate_normal([10, 50], [[4, 3], [3, 9]], size=5000)
    H = compute_transform(X, 1000, c_reg=0.0)
    Y = H.apply(X) / H.alpha
    np.testing.assert_allclose(np.cov(Y, rowvar=False), np.eye(2), atol=1e-10)
    S = regularized_covariance(X, 1.0)
    np.testing.assert_allclose(np.diag(S), 2 * np.diag(np.cov(X, rowvar=False)))
