"""Constrained Frobenius recovery over the approximately-low-rank set.

``min_{Z ∈ Ω} ‖T − X̌Z‖_F`` is solved in image space: ``X̌Ω = Ψ(X̌)``, so the
optimal image is the Euclidean projection of ``T`` onto ``Ψ(X̌)``, and the
weights are pulled back with the pseudoinverse (the minimal-Frobenius-norm
preimage whenever the map is many-to-one).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from dense_linalg import as_matrix, norms, pinv
from errors import ArgumentError
from feasible_set import ProjectionDiagnostics, PsiParams, project_psi

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConvexRecoveryResult:
    m_hat: np.ndarray
    y_hat: np.ndarray
    diagnostics: ProjectionDiagnostics

    def objective(self, t: np.ndarray) -> float:
        return float(np.linalg.norm(np.asarray(t) - self.y_hat))


def pull_back(x_check: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(X̌†y, X̌X̌†y)``: the minimal-norm weights and their exact image."""

    m_hat = pinv(x_check) @ y
    return m_hat, x_check @ m_hat


def solve_constrained(
    t: np.ndarray,
    p: PsiParams,
    tol: float | None = None,
    max_iter: int | None = None,
) -> ConvexRecoveryResult:
    """Minimise ``‖t − X̌Z‖_F`` over ``Z ∈ Ω``.

    Non-convergence of the projection is not an error: it is reported through
    ``diagnostics.converged``.
    """

    t = as_matrix(t, name="t")
    projected, diagnostics = project_psi(t, p, tol=tol, max_iter=max_iter)
    m_hat, y_hat = pull_back(p.x_check, projected)
    if not diagnostics.converged:
        logger.warning("constrained recovery returned an unconverged projection")
    return ConvexRecoveryResult(m_hat=m_hat, y_hat=y_hat, diagnostics=diagnostics)


def estimate_psi_params(x_check: np.ndarray, reference: np.ndarray, r: int | None = None) -> PsiParams:
    """Estimate ``(α, r)`` from a reference image ``X̌M₀``.

    ``α`` is the entrywise max of the reference. Unless ``r`` is given, it is
    the smallest integer for which the reference is approximately rank-``r``,
    i.e. ``⌈(‖Y‖_* / (‖Y‖∞ √(d1·d2)))²⌉``, capped at ``min(d1, d2)``.
    """

    reference = as_matrix(reference, name="reference")
    n = norms(reference)
    if n.max_abs == 0.0:
        raise ArgumentError("cannot estimate parameters from an all-zero reference")
    d1, d2 = reference.shape
    if r is None:
        ratio = n.nuclear / (n.max_abs * math.sqrt(d1 * d2))
        r = min(max(1, math.ceil(ratio * ratio - 1e-9)), min(d1, d2))
    return PsiParams(x_check=x_check, alpha=n.max_abs, r=r)
