"""Tests for the closed-form rank-constrained solver."""

import numpy as np
import pytest

from errors import ArgumentError, RankDeficientError
from recover_rank import objective_split, solve_rank_constrained


def test_identity_design_reduces_to_truncation():
    result = solve_rank_constrained(np.eye(3), np.diag([3.0, 2.0, 1.0]), 2)
    np.testing.assert_allclose(result.m_hat, np.diag([3.0, 2.0, 0.0]), atol=1e-12)
    assert result.residual_rank == 2
    assert result.objective == pytest.approx(1.0)


def test_full_rank_budget_is_least_squares():
    rng = np.random.default_rng(0)
    x_check = rng.standard_normal((12, 4))
    y_tilde = rng.standard_normal((12, 3))
    result = solve_rank_constrained(x_check, y_tilde, 3)
    expected = np.linalg.lstsq(x_check, y_tilde, rcond=None)[0]
    np.testing.assert_allclose(result.m_hat, expected, atol=1e-10)


def test_noiseless_planted_recovery():
    rng = np.random.default_rng(1)
    x_check = rng.standard_normal((12, 5))
    m = rng.standard_normal((5, 2)) @ rng.standard_normal((2, 6))
    result = solve_rank_constrained(x_check, x_check @ m, 2)
    assert np.linalg.norm(result.m_hat - m) <= 1e-8 * np.linalg.norm(m)
    assert result.objective <= 1e-9


def test_beats_random_rank_r_candidates():
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        x_check = rng.standard_normal((15, 6))
        y_tilde = rng.standard_normal((15, 7))
        best = solve_rank_constrained(x_check, y_tilde, 2).objective
        for _ in range(500):
            z = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 7))
            assert best <= np.linalg.norm(y_tilde - x_check @ z) + 1e-12


def test_objective_decomposition_and_monotonicity():
    rng = np.random.default_rng(2)
    x_check = rng.standard_normal((20, 6))
    y_tilde = rng.standard_normal((20, 5))
    previous = np.inf
    for r in range(1, 6):
        result = solve_rank_constrained(x_check, y_tilde, r)
        in_span, out_of_span = objective_split(x_check, y_tilde, result.m_hat)
        assert result.objective**2 == pytest.approx(in_span**2 + out_of_span**2, abs=1e-9)
        assert result.objective <= previous + 1e-12
        assert result.residual_rank <= r
        previous = result.objective


def test_argument_errors():
    rng = np.random.default_rng(3)
    x_check = rng.standard_normal((8, 4))
    with pytest.raises(ArgumentError):
        solve_rank_constrained(x_check, rng.standard_normal((7, 3)), 1)
    with pytest.raises(ArgumentError):
        solve_rank_constrained(x_check, rng.standard_normal((8, 3)), 4)
    with pytest.raises(ArgumentError):
        solve_rank_constrained(x_check, rng.standard_normal((8, 3)), 0)


def test_rank_deficient_design():
    x_check = np.ones((6, 3))
    with pytest.raises(RankDeficientError):
        solve_rank_constrained(x_check, np.ones((6, 2)), 1)
    with pytest.raises(RankDeficientError):
        solve_rank_constrained(np.random.default_rng(4).standard_normal((3, 5)), np.ones((3, 2)), 1)
