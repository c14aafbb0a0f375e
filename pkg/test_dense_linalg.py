"""Tests for the dense linear-algebra kernel."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dense_linalg import (
    as_matrix,
    gram_sqrt_pair,
    is_approx_rank,
    norms,
    numerical_rank,
    pinv,
    span_basis,
    svd,
    truncate_rank,
)
from errors import ArgumentError, RankDeficientError


def test_as_matrix_rejects_bad_input():
    with pytest.raises(ArgumentError):
        as_matrix(np.zeros(3))
    with pytest.raises(ArgumentError):
        as_matrix(np.zeros((0, 2)))
    with pytest.raises(ArgumentError):
        as_matrix([[1.0, math.nan]])


def test_svd_reconstructs_and_orders():
    a = np.random.default_rng(0).standard_normal((7, 4))
    f = svd(a)
    assert f.k == 4
    assert np.all(np.diff(f.s) <= 0)
    np.testing.assert_allclose(f.reconstruct(), a, atol=1e-12)


def test_svd_sign_convention_is_deterministic():
    a = np.random.default_rng(1).standard_normal((6, 5))
    f = svd(a)
    g = svd(-a)
    pivots = np.argmax(np.abs(f.u), axis=0)
    assert np.all(f.u[pivots, np.arange(f.k)] >= 0)
    # flipping the matrix flips v but never u
    np.testing.assert_allclose(np.abs(f.u), np.abs(g.u), atol=1e-12)
    np.testing.assert_allclose(f.s, g.s, atol=1e-12)


def test_truncate_rank_examples():
    np.testing.assert_allclose(truncate_rank(np.diag([3.0, 2.0, 1.0]), 2), np.diag([3.0, 2.0, 0.0]))
    a = np.array([[1.0, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(truncate_rank(a, 1), a, atol=1e-12)
    with pytest.raises(ArgumentError):
        truncate_rank(a, 3)
    with pytest.raises(ArgumentError):
        truncate_rank(a, 0)


def test_truncate_rank_error_equals_tail():
    a = np.random.default_rng(2).standard_normal((10, 8))
    s = svd(a).s
    for r in (1, 3, 8):
        err = np.linalg.norm(a - truncate_rank(a, r))
        assert err == pytest.approx(math.sqrt(np.sum(s[r:] ** 2)), abs=1e-10)


def test_pinv_examples():
    np.testing.assert_allclose(pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))
    a = np.random.default_rng(3).standard_normal((5, 3))
    p = pinv(a)
    np.testing.assert_allclose(a @ p @ a, a, atol=1e-10)
    np.testing.assert_allclose(p @ a, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(pinv(np.zeros((2, 3))), np.zeros((3, 2)))
    with pytest.raises(ArgumentError):
        pinv(a, rcond=-1.0)


def test_truncate_rank_beats_random_rank_r_matrices():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((9, 7))
    for r in (1, 2, 4):
        best = np.linalg.norm(a - truncate_rank(a, r))
        for _ in range(200):
            b = rng.standard_normal((9, r)) @ rng.standard_normal((r, 7))
            assert best <= np.linalg.norm(a - b) + 1e-12


def test_pinv_of_pinv_recovers_full_rank_input():
    rng = np.random.default_rng(5)
    for shape in ((4, 4), (6, 3), (3, 6)):
        a = rng.standard_normal(shape)
        np.testing.assert_allclose(pinv(pinv(a)), a, atol=1e-8)


def test_numerical_rank_and_span_basis():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((8, 2)) @ rng.standard_normal((2, 6))
    assert numerical_rank(a) == 2
    assert numerical_rank(np.zeros((3, 3))) == 0
    q = span_basis(a)
    assert q.shape == (8, 2)
    np.testing.assert_allclose(q.T @ q, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(q @ q.T @ a, a, atol=1e-10)


def test_gram_sqrt_pair():
    x = np.random.default_rng(5).standard_normal((9, 4))
    root, inv_root = gram_sqrt_pair(x)
    np.testing.assert_allclose(root @ root, x.T @ x, atol=1e-10)
    np.testing.assert_allclose(root @ inv_root, np.eye(4), atol=1e-10)
    np.testing.assert_allclose(root, root.T)


def test_gram_sqrt_pair_rejects_rank_deficient():
    with pytest.raises(RankDeficientError):
        gram_sqrt_pair(np.ones((4, 2)))
    with pytest.raises(RankDeficientError):
        gram_sqrt_pair(np.random.default_rng(6).standard_normal((2, 3)))


def test_norms_examples():
    n = norms(np.diag([3.0, -4.0]))
    assert n.frobenius == pytest.approx(5.0)
    assert n.operator == pytest.approx(4.0)
    assert n.nuclear == pytest.approx(7.0)
    assert n.max_abs == pytest.approx(4.0)


@settings(max_examples=30, deadline=None)
@given(
    rows=st.integers(min_value=1, max_value=6),
    cols=st.integers(min_value=1, max_value=6),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_norm_ordering(rows, cols, seed):
    a = np.random.default_rng(seed).standard_normal((rows, cols))
    n = norms(a)
    slack = 1e-12 * (1.0 + n.nuclear)
    assert n.max_abs <= n.operator + slack
    assert n.operator <= n.frobenius + slack
    assert n.frobenius <= n.nuclear + slack
    assert n.nuclear <= math.sqrt(min(rows, cols)) * n.frobenius + slack


def test_is_approx_rank():
    assert is_approx_rank(np.ones((4, 4)), 1)
    # ‖I‖_* = 4 = 1·√(1·16): holds with equality
    assert is_approx_rank(np.eye(4), 1)
    hadamard = np.array([[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]], dtype=float)
    # nuclear norm 8 against bounds 4√r
    assert not is_approx_rank(hadamard, 1)
    assert not is_approx_rank(hadamard, 3)
    assert is_approx_rank(hadamard, 4)
    spiky = np.zeros((5, 5))
    spiky[0, 0] = 1.0
    assert is_approx_rank(spiky, 1)
    assert is_approx_rank(np.zeros((3, 2)), 1)
