"""Maximum-likelihood recovery from ReLU-censored Gaussian observations.

Observations are ``Z = ρ(Y + G)`` with ``G`` i.i.d. ``N(0, σ²)``. An entry with
``Z_ij > 0`` reveals ``Y_ij + G_ij`` exactly; a zero entry only reveals
``Y_ij + G_ij ≤ 0``. The log-likelihood of a candidate ``M′`` is therefore

    Σ_{Z>0} log φ_σ(Z − M′) + Σ_{Z=0} log(1 − f(M′)),   f = CDF of N(0, σ²),

which is concave. It is maximised over ``Ψ(X̌)`` by projected gradient ascent
with step ``σ²``: both branches have curvature in ``[-1/σ², 0]``, so ``σ²`` is
the inverse Lipschitz constant of the gradient. An Armijo halving search
guards against the rare step that loses ground through an inexact projection.

The module also evaluates the scalar inequalities the recovery guarantee is
built on (log-concavity bounds, Lipschitz/curvature constants, Hellinger
distance against KL and against squared differences, tightness of the
relaxation) so they can be checked numerically.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, NamedTuple, Tuple

import numpy as np
from scipy.special import log_ndtr, rel_entr

from config import Config
from dense_linalg import as_matrix, numerical_rank
from errors import ArgumentError, RankDeficientError
from feasible_set import PsiParams, project_psi
from recover_convex import pull_back

logger = logging.getLogger(__name__)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_ARMIJO = 1e-4
_MAX_BACKTRACKS = 30
LEMMA_MARGIN_FLOOR = -1e-7


def log_norm_cdf(t: float | np.ndarray, sigma: float) -> float | np.ndarray:
    """``log Φ(t/σ)``, finite for every finite ``t``.

    ``scipy.special.log_ndtr`` switches to an asymptotic series in the far
    left tail, so ``log_norm_cdf(-40, 1)`` is about ``-804.608`` instead of
    ``-inf``.
    """

    if not sigma > 0:
        raise ArgumentError(f"sigma must be positive, got {sigma}")
    value = log_ndtr(np.asarray(t, dtype=np.float64) / sigma)
    if np.ndim(value) == 0:
        return float(value)
    return value


def _log_std_pdf(t: np.ndarray) -> np.ndarray:
    return -0.5 * t * t - _HALF_LOG_2PI


def _upper_hazard(m: np.ndarray, sigma: float) -> np.ndarray:
    """``f′(m) / (1 − f(m))`` evaluated in log space."""

    t = m / sigma
    return np.exp(_log_std_pdf(t) - math.log(sigma) - log_ndtr(-t))


@dataclass(frozen=True, eq=False)
class CensoredObservation:
    """ReLU output ``Z = ρ(X̌M + G)`` with the noise level that produced it."""

    z: np.ndarray
    sigma: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "z", as_matrix(self.z, name="z"))
        if not self.sigma > 0:
            raise ArgumentError(f"sigma must be positive, got {self.sigma}")
        if np.any(self.z < 0):
            raise ArgumentError("censored observations must be entrywise nonnegative")

    @property
    def positive(self) -> np.ndarray:
        return self.z > 0

    def check_shape(self, m_prime: np.ndarray) -> np.ndarray:
        m_prime = as_matrix(m_prime, name="m_prime")
        if m_prime.shape != self.z.shape:
            raise ArgumentError(f"candidate shape {m_prime.shape} != observation shape {self.z.shape}")
        return m_prime


def censored_loglik(m_prime: np.ndarray, obs: CensoredObservation) -> float:
    """Censored Gaussian log-likelihood of ``m_prime`` given ``obs``."""

    m_prime = obs.check_shape(m_prime)
    sigma = obs.sigma
    residual = (obs.z - m_prime) / sigma
    gaussian = -0.5 * residual * residual - _HALF_LOG_2PI - math.log(sigma)
    censored = log_ndtr(-m_prime / sigma)
    return float(np.sum(np.where(obs.positive, gaussian, censored)))


def censored_loglik_grad(m_prime: np.ndarray, obs: CensoredObservation) -> np.ndarray:
    """Gradient of :func:`censored_loglik` with respect to ``m_prime``."""

    m_prime = obs.check_shape(m_prime)
    sigma = obs.sigma
    return np.where(
        obs.positive,
        (obs.z - m_prime) / (sigma * sigma),
        -_upper_hazard(m_prime, sigma),
    )


def relaxed_objective(m_prime: np.ndarray, obs: CensoredObservation) -> float:
    """Frobenius-style relaxation of ``½‖Z − ρ(M′)‖_F²``.

    ``Σ_{Z>0} ½(Z − M′)² − σ² Σ_{Z=0} log(1 − f(M′))``. Equal to
    ``−σ²·censored_loglik`` up to an additive constant, so its minimiser over
    any feasible set is the likelihood maximiser.
    """

    m_prime = obs.check_shape(m_prime)
    sigma = obs.sigma
    quadratic = 0.5 * (obs.z - m_prime) ** 2
    barrier = -(sigma * sigma) * log_ndtr(-m_prime / sigma)
    return float(np.sum(np.where(obs.positive, quadratic, barrier)))


def relu_residual(m_prime: np.ndarray, obs: CensoredObservation) -> float:
    """The non-convex objective ``½‖Z − ρ(M′)‖_F²``."""

    m_prime = obs.check_shape(m_prime)
    return float(0.5 * np.sum((obs.z - np.maximum(m_prime, 0.0)) ** 2))


@dataclass(frozen=True)
class MleResult:
    m_hat: np.ndarray
    y_hat: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    trace: Tuple[float, ...] = field(default_factory=tuple)


def _require_full_column_rank(x_check: np.ndarray) -> None:
    d1, d = x_check.shape
    if d1 < d or numerical_rank(x_check) < d:
        raise RankDeficientError(f"X̌ ({d1}x{d}) must have full column rank")


def solve_mle(
    obs: CensoredObservation,
    p: PsiParams,
    tol: float | None = None,
    max_iter: int | None = None,
    *,
    projection_tol: float | None = None,
    projection_max_iter: int | None = None,
) -> MleResult:
    """Maximise the censored log-likelihood over ``Ψ(X̌)``.

    Starts from the projection of ``Z`` and takes projected gradient steps of
    size ``σ²``, halving on an Armijo failure. Stops when the relative gain
    drops below ``tol`` (``Config.MLE_TOL``) or after ``max_iter`` steps
    (``Config.MLE_MAX_ITER``); the reported trace is nondecreasing.

    Raises:
        RankDeficientError: If ``X̌`` is not of full column rank.
    """

    tol = Config.MLE_TOL if tol is None else tol
    max_iter = Config.MLE_MAX_ITER if max_iter is None else max_iter
    if not tol > 0 or max_iter < 1:
        raise ArgumentError("tol must be positive and max_iter at least 1")
    p.check_target(obs.z)
    _require_full_column_rank(p.x_check)

    def project(y: np.ndarray) -> np.ndarray:
        projected, _ = project_psi(y, p, tol=projection_tol, max_iter=projection_max_iter)
        return projected

    step = obs.sigma * obs.sigma
    y = project(obs.z)
    value = censored_loglik(y, obs)
    trace = [value]
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        gradient = censored_loglik_grad(y, obs)
        scale = step
        candidate = None
        candidate_value = value
        for _ in range(_MAX_BACKTRACKS):
            trial = project(y + scale * gradient)
            trial_value = censored_loglik(trial, obs)
            gain = float(np.sum(gradient * (trial - y)))
            if trial_value >= value + _ARMIJO * max(gain, 0.0):
                candidate, candidate_value = trial, trial_value
                break
            scale *= 0.5

        if candidate is None:
            # no ascent step at working precision
            converged = True
            break

        relative_gain = (candidate_value - value) / max(1.0, abs(value))
        y, value = candidate, candidate_value
        trace.append(value)
        if relative_gain < tol:
            converged = True
            break

    if converged:
        logger.debug("censored MLE converged after %d steps, loglik %.6e", iterations, value)
    else:
        logger.warning("censored MLE hit max_iter=%d, loglik %.6e", max_iter, value)

    m_hat, _ = pull_back(p.x_check, y)
    return MleResult(
        m_hat=m_hat,
        y_hat=y,
        loglik=value,
        iterations=iterations,
        converged=converged,
        trace=tuple(trace),
    )


@dataclass(frozen=True)
class LemmaReport:
    """Worst-case margins of the scalar inequalities (≥ 0 means the bound holds)."""

    alpha: float
    sigma: float
    grid_n: int
    margins: Dict[str, float]
    values: Dict[str, float]

    @property
    def passed(self) -> bool:
        return all(m >= LEMMA_MARGIN_FLOOR for m in self.margins.values())

    def failures(self) -> Dict[str, float]:
        return {k: m for k, m in self.margins.items() if m < LEMMA_MARGIN_FLOOR}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "sigma": self.sigma,
            "grid_n": self.grid_n,
            "passed": self.passed,
            "margins": dict(self.margins),
            "values": dict(self.values),
        }


def tightness_ratio(x: float | np.ndarray, sigma: float) -> float | np.ndarray:
    """``−σ² log(1 − f(x)) / (x²/2)``; tends to 1 as ``x → ∞``."""

    x = np.asarray(x, dtype=np.float64)
    ratio = -(sigma * sigma) * log_ndtr(-x / sigma) / (0.5 * x * x)
    if np.ndim(ratio) == 0:
        return float(ratio)
    return ratio


def verify_scalar_lemmas(
    alpha: float,
    sigma: float,
    grid_n: int = 100_000,
    *,
    n_pairs: int = 10_000,
    seed: int = 0,
) -> LemmaReport:
    """Evaluate every scalar inequality on a grid and report worst margins.

    Checks, for ``f`` the CDF of ``N(0, σ²)`` on ``[-α, α]``:

    * ``(log f)″ ≤ 0`` and ``(log f)″ ≥ −1/σ²``;
    * the second-order lower bound
      ``log f(b) − log f(a) ≥ (f′(a)/f(a))(b − a) − (b − a)²/(2σ²)`` on grid
      pairs and ``n_pairs`` random pairs;
    * ``sup |f′|/(f(1−f)) ≤ 8(α+σ)/σ²`` and ``sup f(1−f)/f′² ≤ πσ² e^{α²/2σ²}``;
    * ``d_H²(p, q) ≤ D_KL(p‖q)`` on ``n_pairs`` random Bernoulli pairs;
    * ``d_H²(f(u), f(v)) ≥ (u − v)²/(8β)`` on ``n_pairs`` random pairs in
      ``[-α, α]²``, with ``β`` the grid supremum of ``f(1−f)/f′²``;
    * ``−σ² log(1 − f(x)) ≥ x²/2`` on ``[σ, 20σ]`` and the ratio at ``10σ``
      lying in ``[1.0, 1.1]``.
    """

    if not alpha > 0 or not sigma > 0:
        raise ArgumentError("alpha and sigma must be positive")
    if grid_n < 1000:
        raise ArgumentError(f"grid_n must be at least 1000, got {grid_n}")

    x = np.linspace(-alpha, alpha, grid_n)
    t = x / sigma
    log_cdf = log_ndtr(t)
    log_sf = log_ndtr(-t)
    log_pdf = _log_std_pdf(t) - math.log(sigma)  # log f′(x)
    inverse_mills = np.exp(_log_std_pdf(t) - log_cdf)

    second_derivative = (-t * inverse_mills - inverse_mills**2) / (sigma * sigma)

    rng = np.random.default_rng(seed)
    # antipodal and neighbouring grid pairs plus uniform random pairs
    ends = rng.uniform(-alpha, alpha, size=(2, n_pairs))
    a = np.concatenate([x, x[:-1], ends[0]])
    b = np.concatenate([x[::-1], x[1:], ends[1]])
    log_cdf_a = log_ndtr(a / sigma)
    score_a = np.exp(_log_std_pdf(a / sigma) - math.log(sigma) - log_cdf_a)  # f′(a)/f(a)
    taylor_gap = (log_ndtr(b / sigma) - log_cdf_a) - (score_a * (b - a) - (b - a) ** 2 / (2 * sigma**2))

    lipschitz = float(np.max(np.exp(log_pdf - log_cdf - log_sf)))
    curvature = float(np.max(np.exp(log_cdf + log_sf - 2.0 * log_pdf)))
    lipschitz_bound = 8.0 * (alpha + sigma) / sigma**2
    curvature_bound = math.pi * sigma**2 * math.exp(alpha**2 / (2.0 * sigma**2))

    pq = rng.uniform(1e-9, 1.0 - 1e-9, size=(2, n_pairs))
    p_, q_ = pq
    hellinger_sq = (np.sqrt(p_) - np.sqrt(q_)) ** 2 + (np.sqrt(1 - p_) - np.sqrt(1 - q_)) ** 2
    kl = rel_entr(p_, q_) + rel_entr(1 - p_, 1 - q_)

    u, v = rng.uniform(-alpha, alpha, size=(2, n_pairs))
    root_fu, root_sfu = np.exp(0.5 * log_ndtr(u / sigma)), np.exp(0.5 * log_ndtr(-u / sigma))
    root_fv, root_sfv = np.exp(0.5 * log_ndtr(v / sigma)), np.exp(0.5 * log_ndtr(-v / sigma))
    hellinger_uv = (root_fu - root_fv) ** 2 + (root_sfu - root_sfv) ** 2
    frobenius_gap = hellinger_uv - (u - v) ** 2 / (8.0 * curvature)

    tail = np.linspace(sigma, 20.0 * sigma, grid_n)
    ratios = tightness_ratio(tail, sigma)
    ratio_at_ten = tightness_ratio(10.0 * sigma, sigma)

    margins = {
        "log_concavity": float(-np.max(second_derivative)),
        "curvature_lower_bound": float(np.min(second_derivative) + 1.0 / sigma**2),
        "taylor_lower_bound": float(np.min(taylor_gap)),
        "lipschitz_constant": lipschitz_bound - lipschitz,
        "curvature_constant": curvature_bound - curvature,
        "hellinger_below_kl": float(np.min(kl - hellinger_sq)),
        "hellinger_to_frobenius": float(np.min(frobenius_gap)),
        "relaxation_upper_bound": float(np.min(ratios) - 1.0),
        "tightness_at_10_sigma": min(ratio_at_ten - 1.0, 1.1 - ratio_at_ten),
    }
    values = {
        "lipschitz_sup": lipschitz,
        "lipschitz_bound": lipschitz_bound,
        "curvature_sup": curvature,
        "curvature_bound": curvature_bound,
        "tightness_ratio_10_sigma": ratio_at_ten,
    }
    report = LemmaReport(alpha=alpha, sigma=sigma, grid_n=grid_n, margins=margins, values=values)
    if not report.passed:
        logger.warning("scalar lemma check failed: %s", report.failures())
    return report


class ExceedanceEstimate(NamedTuple):
    frequency: float
    bound: float
    threshold: float


def max_entry_exceedance(
    d1: int,
    d2: int,
    sigma: float,
    samples: int,
    rng: np.random.Generator,
) -> ExceedanceEstimate:
    """Empirical ``P(max G_ij ≥ 2√(log d1d2)·σ)`` against its analytic bound."""

    if d1 * d2 < 2 or samples < 1 or not sigma > 0:
        raise ArgumentError("need d1*d2 ≥ 2, samples ≥ 1 and sigma > 0")
    log_n = math.log(d1 * d2)
    threshold = 2.0 * math.sqrt(log_n) * sigma
    hits = 0
    for _ in range(samples):
        if np.max(rng.normal(0.0, sigma, size=(d1, d2))) >= threshold:
            hits += 1
    bound = 1.0 / (2.0 * math.sqrt(2.0 * math.pi) * d1 * d2 * math.sqrt(log_n))
    return ExceedanceEstimate(frequency=hits / samples, bound=bound, threshold=threshold)
