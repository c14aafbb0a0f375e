"""Feasible sets of the constrained recovery programs and their projections.

``Ψ(X̌)`` is the intersection of three closed convex sets in image space:

* the nuclear-norm ball ``‖Y‖_* ≤ τ`` with ``τ = α√(r·d1·d2)``,
* the entrywise box ``‖Y‖∞ ≤ α``,
* the column-span subspace ``Y_j ∈ span(col(X̌))`` for every column ``j``.

The Euclidean projection onto the intersection is computed with Dykstra's
alternating projections, which (unlike plain alternating projections)
converges to the projection itself and not merely to some feasible point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, List, Tuple

import numpy as np

from config import Config
from dense_linalg import as_matrix, norms, span_basis, svd
from errors import ArgumentError

logger = logging.getLogger(__name__)

# roundoff floor added to every relative membership test
_SLACK_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class PsiParams:
    """Parameters ``(X̌, α, r)`` that define ``Ω`` and ``Ψ(X̌)``."""

    x_check: np.ndarray
    alpha: float
    r: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "x_check", as_matrix(self.x_check, name="x_check"))
        if not self.alpha > 0:
            raise ArgumentError(f"alpha must be positive, got {self.alpha}")
        if int(self.r) != self.r or self.r < 1:
            raise ArgumentError(f"r must be a positive integer, got {self.r}")
        if self.r > self.x_check.shape[0]:
            raise ArgumentError(f"r={self.r} exceeds d1={self.x_check.shape[0]}")

    @property
    def d1(self) -> int:
        return int(self.x_check.shape[0])

    @cached_property
    def span_basis(self) -> np.ndarray:
        """Orthonormal basis of ``col(X̌)``."""

        return span_basis(self.x_check)

    def nuclear_radius(self, shape: Tuple[int, int]) -> float:
        """``τ = α√(r·d1·d2)`` for a target of the given shape."""

        d1, d2 = shape
        return float(self.alpha * np.sqrt(self.r * d1 * d2))

    def check_target(self, y: np.ndarray) -> None:
        if y.shape[0] != self.d1:
            raise ArgumentError(f"target has {y.shape[0]} rows but X̌ has {self.d1}")
        if self.r > min(y.shape):
            raise ArgumentError(f"r={self.r} exceeds min{y.shape}")


@dataclass(frozen=True)
class ProjectionDiagnostics:
    iterations: int
    final_violation: float
    converged: bool


def project_linf(y: np.ndarray, alpha: float) -> np.ndarray:
    """Entrywise clamp to ``[-alpha, alpha]``."""

    if not alpha > 0:
        raise ArgumentError(f"alpha must be positive, got {alpha}")
    return np.clip(as_matrix(y, name="y"), -alpha, alpha)


def project_l1_ball(values: np.ndarray, radius: float) -> np.ndarray:
    """Project a nonnegative vector onto ``{x ≥ 0 : Σx ≤ radius}``.

    Sorting-based water-filling: find the threshold ``θ`` such that
    ``Σ max(v - θ, 0) = radius`` and soft-threshold by it.
    """

    v = np.asarray(values, dtype=np.float64)
    if radius <= 0:
        raise ArgumentError(f"radius must be positive, got {radius}")
    if np.sum(v) <= radius:
        return v.copy()
    ordered = np.sort(v)[::-1]
    cumulative = np.cumsum(ordered) - radius
    index = np.arange(1, v.size + 1)
    active = ordered - cumulative / index > 0
    rho = int(np.nonzero(active)[0][-1])
    theta = cumulative[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def project_nuclear(y: np.ndarray, tau: float) -> np.ndarray:
    """Euclidean projection onto the nuclear-norm ball of radius ``tau``."""

    if not tau > 0:
        raise ArgumentError(f"tau must be positive, got {tau}")
    y = as_matrix(y, name="y")
    factors = svd(y)
    if np.sum(factors.s) <= tau:
        return y.copy()
    shrunk = project_l1_ball(factors.s, tau)
    return (factors.u * shrunk) @ factors.v.T


def _project_onto_basis(y: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return basis @ (basis.T @ y)


def project_span(y: np.ndarray, x_check: np.ndarray) -> np.ndarray:
    """Project every column of ``y`` onto ``span(col(x_check))``: ``X̌X̌†y``."""

    y = as_matrix(y, name="y")
    x_check = as_matrix(x_check, name="x_check")
    if y.shape[0] != x_check.shape[0]:
        raise ArgumentError(f"y has {y.shape[0]} rows but x_check has {x_check.shape[0]}")
    return _project_onto_basis(y, span_basis(x_check))


def _span_residual(y: np.ndarray, basis: np.ndarray) -> float:
    scale = float(np.linalg.norm(y))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(y - _project_onto_basis(y, basis))) / scale


def violation(y: np.ndarray, p: PsiParams) -> float:
    """Largest relative residual over the three constraints of ``Ψ(X̌)``."""

    y = as_matrix(y, name="y")
    n = norms(y)
    tau = p.nuclear_radius(y.shape)
    return max(
        0.0,
        n.max_abs / p.alpha - 1.0,
        n.nuclear / tau - 1.0,
        _span_residual(y, p.span_basis),
    )


def project_psi(
    y: np.ndarray,
    p: PsiParams,
    tol: float | None = None,
    max_iter: int | None = None,
) -> Tuple[np.ndarray, ProjectionDiagnostics]:
    """Euclidean projection of ``y`` onto ``Ψ(X̌)`` by Dykstra's algorithm.

    Sweeps run in the fixed order span → nuclear → ℓ∞. A sweep is accepted as
    final when the iterate moved by at most ``tol·max(1, ‖x‖_F)`` and its
    constraint violation is at most ``tol``.

    Args:
        y: Matrix to project, ``d1 × d2``.
        p: Feasible-set parameters.
        tol: Convergence tolerance, ``Config.PROJECTION_TOL`` by default.
        max_iter: Sweep budget, ``Config.PROJECTION_MAX_ITER`` by default.

    Returns:
        The projected matrix and diagnostics. When the budget is exhausted the
        last iterate is returned with ``converged=False``.
    """

    tol = Config.PROJECTION_TOL if tol is None else tol
    max_iter = Config.PROJECTION_MAX_ITER if max_iter is None else max_iter
    if not tol > 0:
        raise ArgumentError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ArgumentError(f"max_iter must be at least 1, got {max_iter}")

    y = as_matrix(y, name="y")
    p.check_target(y)
    tau = p.nuclear_radius(y.shape)
    basis = p.span_basis

    steps: List[Callable[[np.ndarray], np.ndarray]] = [
        lambda z: _project_onto_basis(z, basis),
        lambda z: project_nuclear(z, tau),
        lambda z: np.clip(z, -p.alpha, p.alpha),
    ]
    corrections = [np.zeros_like(y) for _ in steps]

    x = y.copy()
    current_violation = float("inf")
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        previous = x
        for i, step in enumerate(steps):
            shifted = x + corrections[i]
            x = step(shifted)
            corrections[i] = shifted - x

        change = float(np.linalg.norm(x - previous))
        if change > tol * max(1.0, float(np.linalg.norm(x))):
            continue
        current_violation = violation(x, p)
        if current_violation <= tol:
            converged = True
            break

    if not converged:
        current_violation = violation(x, p)
        logger.warning(
            "Dykstra projection stopped after %d sweeps with violation %.3e (tol %.1e)",
            iterations,
            current_violation,
            tol,
        )
    else:
        logger.debug("Dykstra projection converged in %d sweeps", iterations)

    return x, ProjectionDiagnostics(
        iterations=iterations,
        final_violation=current_violation,
        converged=converged,
    )


def contains(y: np.ndarray, p: PsiParams, tol: float = 0.0) -> bool:
    """Whether ``y`` satisfies all three constraints within relative slack ``tol``."""

    if tol < 0:
        raise ArgumentError(f"tol must be nonnegative, got {tol}")
    y = as_matrix(y, name="y")
    p.check_target(y)
    slack = tol + _SLACK_FLOOR
    n = norms(y)
    if n.max_abs > p.alpha * (1.0 + slack):
        return False
    if n.nuclear > p.nuclear_radius(y.shape) * (1.0 + slack):
        return False
    return _span_residual(y, p.span_basis) <= slack
