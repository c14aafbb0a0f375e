"""Dense linear-algebra kernel used by every solver.

Matrices are plain ``numpy`` float64 arrays of shape ``(rows, cols)``;
:func:`as_matrix` is the single gate that enforces the carrier invariants
(two dimensions, finite entries, 64-bit floats). Every SVD in the toolkit goes
through :func:`svd` so that all factorizations share one sign convention and
are reproducible across runs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from errors import ArgumentError, NumericFailureError, RankDeficientError

logger = logging.getLogger(__name__)

# smallest singular value must exceed this fraction of the largest
FULL_RANK_TOL = 1e-10
DEFAULT_RCOND = 1e-12


def as_matrix(a: np.ndarray | list, *, name: str = "matrix") -> np.ndarray:
    """Validate and convert ``a`` into a finite float64 matrix.

    Args:
        a: Array-like with exactly two dimensions.
        name: Name used in error messages.

    Returns:
        A float64 ``numpy`` array (a copy only when a conversion was needed).

    Raises:
        ArgumentError: If ``a`` is not two-dimensional, is empty, or holds
            NaN/Inf entries.
    """

    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ArgumentError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ArgumentError(f"{name} must have positive dimensions, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SvdFactors:
    """Compact SVD ``a = u @ diag(s) @ v.T`` with ``k = min(rows, cols)``."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    @property
    def k(self) -> int:
        return int(self.s.shape[0])

    def reconstruct(self, r: int | None = None) -> np.ndarray:
        """Rebuild the matrix from the leading ``r`` triplets (all by default)."""

        r = self.k if r is None else r
        return (self.u[:, :r] * self.s[:r]) @ self.v[:, :r].T


def svd(a: np.ndarray) -> SvdFactors:
    """Compute a compact SVD with a deterministic sign convention.

    Each left singular vector is flipped so that its largest-magnitude entry
    is nonnegative (ties go to the lowest index); the matching right singular
    vector is flipped with it.

    Raises:
        NumericFailureError: If LAPACK fails to converge.
    """

    a = as_matrix(a)
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericFailureError(f"SVD did not converge for a {a.shape} matrix: {exc}") from exc

    v = vh.T.copy()
    pivots = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[pivots, np.arange(u.shape[1])] < 0, -1.0, 1.0)
    u = u * signs
    v = v * signs
    # LAPACK already returns nonincreasing values; clip tiny negatives from roundoff
    s = np.maximum(s, 0.0)
    return SvdFactors(u=u, s=s, v=v)


def numerical_rank(a: np.ndarray, rel_tol: float = FULL_RANK_TOL) -> int:
    """Number of singular values above ``rel_tol`` times the largest one."""

    s = svd(a).s
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0]))


def truncate_rank(a: np.ndarray, r: int) -> np.ndarray:
    """Best rank-``r`` approximation of ``a`` in Frobenius and operator norm.

    Raises:
        ArgumentError: If ``r`` is outside ``[1, min(rows, cols)]``.
    """

    a = as_matrix(a)
    limit = min(a.shape)
    if not 1 <= r <= limit:
        raise ArgumentError(f"rank {r} out of range [1, {limit}]")
    return svd(a).reconstruct(r)


def _kept(s: np.ndarray, rcond: float) -> np.ndarray:
    if s[0] == 0.0:
        return np.zeros_like(s, dtype=bool)
    return s > rcond * s[0]


def pinv(a: np.ndarray, rcond: float = DEFAULT_RCOND) -> np.ndarray:
    """Moore–Penrose pseudoinverse.

    Singular values at or below ``rcond`` times the largest singular value are
    treated as zero.
    """

    if rcond < 0:
        raise ArgumentError("rcond must be nonnegative")
    factors = svd(a)
    keep = _kept(factors.s, rcond)
    inv_s = np.zeros_like(factors.s)
    inv_s[keep] = 1.0 / factors.s[keep]
    return (factors.v * inv_s) @ factors.u.T


def span_basis(x: np.ndarray, rcond: float = DEFAULT_RCOND) -> np.ndarray:
    """Orthonormal basis ``Q`` of the column span of ``x`` (``QQᵀ = x x†``)."""

    factors = svd(x)
    keep = _kept(factors.s, rcond)
    return factors.u[:, keep]


def gram_sqrt_pair(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(S, S⁻¹)`` with ``S`` the symmetric square root of ``xᵀx``.

    Raises:
        RankDeficientError: If ``x`` does not have full column rank, i.e. it
            has fewer rows than columns or its smallest singular value is at
            most ``1e-10`` times its largest.
    """

    x = as_matrix(x, name="x")
    rows, cols = x.shape
    if rows < cols:
        raise RankDeficientError(f"a {rows}x{cols} matrix cannot have full column rank")
    factors = svd(x)
    s = factors.s
    if s[0] == 0.0 or s[-1] <= FULL_RANK_TOL * s[0]:
        raise RankDeficientError(
            f"matrix is rank deficient: smallest singular value {s[-1]:.3e}, largest {s[0]:.3e}"
        )
    v = factors.v
    root = (v * s) @ v.T
    inv_root = (v / s) @ v.T
    # symmetrise away roundoff
    return 0.5 * (root + root.T), 0.5 * (inv_root + inv_root.T)


class MatrixNorms(NamedTuple):
    frobenius: float
    operator: float
    nuclear: float
    max_abs: float


def norms(a: np.ndarray) -> MatrixNorms:
    """Frobenius, operator, nuclear and entrywise max-abs norms of ``a``."""

    a = as_matrix(a)
    s = svd(a).s
    return MatrixNorms(
        frobenius=float(np.linalg.norm(a)),
        operator=float(s[0]),
        nuclear=float(np.sum(s)),
        max_abs=float(np.max(np.abs(a))),
    )


def is_approx_rank(y: np.ndarray, r: int) -> bool:
    """Whether ``‖y‖_* ≤ ‖y‖∞ √(r·rows·cols)`` (with 1e-9 relative slack)."""

    if r < 1:
        raise ArgumentError("r must be a positive integer")
    y = as_matrix(y, name="y")
    n = norms(y)
    if n.max_abs == 0.0:
        return True
    bound = n.max_abs * np.sqrt(r * y.shape[0] * y.shape[1])
    return bool(n.nuclear <= bound * (1.0 + 1e-9))
