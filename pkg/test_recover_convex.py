"""Tests for constrained Frobenius recovery."""

import math

import numpy as np
import pytest

from errors import ArgumentError
from feasible_set import PsiParams, contains, project_psi
from recover_convex import estimate_psi_params, pull_back, solve_constrained


def test_feasible_target_is_a_fixed_point():
    rng = np.random.default_rng(0)
    x_check = rng.standard_normal((6, 6))
    p = PsiParams(x_check=x_check, alpha=1.0, r=2)
    t = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 5))
    t *= 0.8 / np.max(np.abs(t))
    result = solve_constrained(t, p)
    np.testing.assert_allclose(result.y_hat, t, atol=1e-6)
    np.testing.assert_allclose(result.m_hat, np.linalg.solve(x_check, t), atol=1e-6)


def test_zero_target():
    p = PsiParams(x_check=np.random.default_rng(1).standard_normal((8, 4)), alpha=1.0, r=1)
    result = solve_constrained(np.zeros((8, 3)), p)
    np.testing.assert_array_equal(result.y_hat, np.zeros((8, 3)))
    np.testing.assert_array_equal(result.m_hat, np.zeros((4, 3)))


def test_planted_image_is_recovered():
    rng = np.random.default_rng(2)
    x_check = rng.standard_normal((12, 5))
    y = x_check @ (rng.standard_normal((5, 2)) @ rng.standard_normal((2, 7)))
    p = PsiParams(x_check=x_check, alpha=float(np.max(np.abs(y))), r=2)
    result = solve_constrained(y, p)
    np.testing.assert_allclose(result.y_hat, y, atol=1e-6)


def test_image_is_consistent_with_weights():
    rng = np.random.default_rng(3)
    p = PsiParams(x_check=rng.standard_normal((20, 10)), alpha=0.5, r=2)
    result = solve_constrained(rng.standard_normal((20, 16)), p)
    scale = max(1.0, np.linalg.norm(result.y_hat))
    assert np.linalg.norm(p.x_check @ result.m_hat - result.y_hat) <= 1e-8 * scale
    assert contains(result.y_hat, p, tol=1e-6)


def test_beats_random_feasible_points():
    rng = np.random.default_rng(4)
    x_check = rng.standard_normal((20, 16))
    p = PsiParams(x_check=x_check, alpha=1.0, r=2)
    clean = x_check @ (rng.standard_normal((16, 2)) @ rng.standard_normal((2, 16)))
    clean *= 1.0 / np.max(np.abs(clean))
    t = clean + rng.uniform(-0.5, 0.5, size=clean.shape)
    result = solve_constrained(t, p, tol=1e-9, max_iter=20_000)
    best = result.objective(t)
    for _ in range(500):
        z, _ = project_psi(rng.standard_normal(t.shape), p)
        assert best <= np.linalg.norm(t - z) + 1e-5


def test_contraction_between_targets():
    rng = np.random.default_rng(5)
    p = PsiParams(x_check=rng.standard_normal((10, 6)), alpha=0.4, r=2)
    for _ in range(10):
        t1 = rng.standard_normal((10, 8))
        t2 = t1 + 0.3 * rng.standard_normal((10, 8))
        a = solve_constrained(t1, p).y_hat
        b = solve_constrained(t2, p).y_hat
        assert np.linalg.norm(a - b) <= np.linalg.norm(t1 - t2) + 1e-6


def test_pull_back_is_minimal_norm():
    x_check = np.array([[1.0, 1.0]])
    m_hat, image = pull_back(x_check, np.array([[2.0]]))
    np.testing.assert_allclose(m_hat, [[1.0], [1.0]])
    np.testing.assert_allclose(image, [[2.0]])


def test_estimate_psi_params():
    rng = np.random.default_rng(6)
    x_check = rng.standard_normal((12, 6))
    reference = x_check @ (rng.standard_normal((6, 1)) @ rng.standard_normal((1, 9)))
    p = estimate_psi_params(x_check, reference)
    assert p.alpha == pytest.approx(np.max(np.abs(reference)))
    # a rank-one matrix is approximately rank-1
    assert p.r == 1
    assert contains(reference, p)

    flat = np.ones((4, 4)) + np.diag([0.0, 1.0, 2.0, 3.0])
    q = estimate_psi_params(np.eye(4), flat)
    nuclear = np.linalg.svd(flat, compute_uv=False).sum()
    assert q.r == min(4, math.ceil((nuclear / (4.0 * 4.0)) ** 2 - 1e-9))
    assert contains(flat, q)

    assert estimate_psi_params(x_check, reference, r=3).r == 3
    with pytest.raises(ArgumentError):
        estimate_psi_params(x_check, np.zeros((12, 9)))
