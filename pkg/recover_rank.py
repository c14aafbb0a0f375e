"""Closed-form rank-constrained reconstruction.

Solves ``min_{rank(Z) ≤ r} ‖Ỹ − X̌Z‖_F`` for a full-column-rank ``X̌``. Writing
``S = (X̌ᵀX̌)^{1/2}``, the objective splits into a constant out-of-span part and
``‖S X̌†Ỹ − S Z‖_F``, so the optimum is

    M̂ = S⁻¹ [S X̌† Ỹ]_r

where ``[·]_r`` is the Eckart–Young truncation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from dense_linalg import as_matrix, gram_sqrt_pair, numerical_rank, pinv, truncate_rank
from errors import ArgumentError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RankRecoveryResult:
    m_hat: np.ndarray
    objective: float
    residual_rank: int


def solve_rank_constrained(x_check: np.ndarray, y_tilde: np.ndarray, r: int) -> RankRecoveryResult:
    """Globally optimal rank-``r`` fit of ``y_tilde`` by ``x_check @ Z``.

    Args:
        x_check: ``d1 × d`` design with ``d1 ≥ d`` and full column rank.
        y_tilde: ``d1 × d2`` target.
        r: Rank budget, ``1 ≤ r ≤ min(d, d2)``.

    Raises:
        RankDeficientError: If ``x_check`` is not of full column rank.
        ArgumentError: If shapes disagree or ``r`` is out of range.
    """

    x_check = as_matrix(x_check, name="x_check")
    y_tilde = as_matrix(y_tilde, name="y_tilde")
    if x_check.shape[0] != y_tilde.shape[0]:
        raise ArgumentError(
            f"x_check has {x_check.shape[0]} rows but y_tilde has {y_tilde.shape[0]}"
        )
    d = x_check.shape[1]
    d2 = y_tilde.shape[1]
    if not 1 <= r <= min(d, d2):
        raise ArgumentError(f"rank {r} out of range [1, {min(d, d2)}]")

    root, inv_root = gram_sqrt_pair(x_check)
    whitened = root @ (pinv(x_check) @ y_tilde)
    m_hat = inv_root @ truncate_rank(whitened, r)

    objective = float(np.linalg.norm(y_tilde - x_check @ m_hat))
    residual_rank = numerical_rank(m_hat)
    logger.debug("rank-%d fit: objective %.6e, numerical rank %d", r, objective, residual_rank)
    return RankRecoveryResult(m_hat=m_hat, objective=objective, residual_rank=residual_rank)


def objective_split(x_check: np.ndarray, y_tilde: np.ndarray, m_hat: np.ndarray) -> Tuple[float, float]:
    """Return ``(‖P Ỹ − X̌M̂‖_F, ‖(I − P) Ỹ‖_F)`` with ``P = X̌X̌†``.

    The squares of the two parts add up to the squared total objective.
    """

    x_check = as_matrix(x_check, name="x_check")
    y_tilde = as_matrix(y_tilde, name="y_tilde")
    projected = x_check @ (pinv(x_check) @ y_tilde)
    in_span = float(np.linalg.norm(projected - x_check @ m_hat))
    out_of_span = float(np.linalg.norm(y_tilde - projected))
    return in_span, out_of_span
