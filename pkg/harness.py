"""Monte-Carlo scaling studies for the three recovery estimators.

A scenario sweeps one dimension, runs ``trials`` seeded planted instances per
dimension, records the normalised error ``‖X̌M − X̌M̂‖_F²/(d1·d2)`` and fits the
log-log slope of the per-dimension median error against the dimension.

Scenarios:

* ``thm1``: closed-form rank-constrained fit; sweeps ``d1`` with ``d`` and
  ``d2`` fixed.
* ``thm2``: constrained Frobenius recovery under bounded noise; sweeps
  ``d1 = d = d2``.
* ``thm3``: censored MLE under Gaussian noise and ReLU; sweeps
  ``d1 = d = d2``. Each trial also solves the uncensored problem on the same
  draw so the cost of censoring can be checked against a sanity band.
* ``compress``: data-driven closed-form compression of a planted two-layer
  network against the data-agnostic truncation baseline; sweeps the width.

Trials of one dimension run concurrently in worker threads; dimensions run in
order and records are sorted before they are written, so the CSV output is a
pure function of the configuration.
"""

from __future__ import annotations

import asyncio
import csv
import logging
import math
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from compress_pipeline import compress_model, evaluate, truncate_model
from config import Config
from errors import ArgumentError, NumericFailureError
from feasible_set import PsiParams
from recover_convex import solve_constrained
from recover_rank import solve_rank_constrained
from recover_relu import CensoredObservation, solve_mle
from synth import SeededRng, gen_approx_rank_instance, gen_exact_rank_instance, gen_mlp
from webhook_client import WebhookClient

logger = logging.getLogger(__name__)

Scenario = Literal["thm1", "thm2", "thm3", "compress", "verify"]

CSV_HEADER = ("scenario", "dimension", "trial", "seed", "mse", "converged")
SANITY_BAND_LABEL = "engineering sanity band"
SANITY_BAND_LIMIT = 4.0
# stream_id = dimension * STREAM_STRIDE + trial
STREAM_STRIDE = 10_000


class ScenarioConfig(BaseModel):
    """Validated configuration of one scaling study."""

    model_config = ConfigDict(extra="forbid")

    scenario: Scenario
    sweep: List[int] = Field(default_factory=list)
    d: int = Field(default=16, ge=1)
    d2: int = Field(default=16, ge=1)
    r: int = Field(default=2, ge=1)
    sigma: float = Field(default=0.5, ge=0)
    beta: float = Field(default=0.5, ge=0)
    alpha: float = Field(default=1.0, gt=0)
    epsilon: float = Field(default=0.0, ge=0)
    trials: int = Field(default=20, ge=1, lt=STREAM_STRIDE)
    seed: int = Field(default_factory=lambda: Config.SEED, ge=0)
    out: Optional[Path] = None
    workers: int = Field(default_factory=lambda: Config.WORKERS, ge=1)
    bootstrap: int = Field(default_factory=lambda: Config.BOOTSTRAP_RESAMPLES, ge=0)
    calibration_samples: int = Field(default=256, ge=1)
    grid: int = Field(default=100_000, ge=1000)

    @field_validator("sweep")
    @classmethod
    def _strictly_increasing(cls, sweep: List[int]) -> List[int]:
        if any(n < 1 for n in sweep):
            raise ValueError("sweep dimensions must be positive")
        if any(b <= a for a, b in zip(sweep, sweep[1:])):
            raise ValueError("sweep must be strictly increasing")
        return sweep

    @model_validator(mode="after")
    def _sweep_required(self) -> "ScenarioConfig":
        if self.scenario != "verify" and not self.sweep:
            raise ValueError(f"scenario '{self.scenario}' needs a non-empty sweep")
        return self


@dataclass(frozen=True)
class TrialRecord:
    scenario: str
    dimension: int
    trial: int
    seed: int
    mse: float
    converged: bool = True
    # baseline error on the same draw: uncensored fit (thm3) or truncation (compress)
    reference_mse: Optional[float] = None

    def csv_row(self) -> Tuple[str, ...]:
        return (
            self.scenario,
            str(self.dimension),
            str(self.trial),
            str(self.seed),
            format(self.mse, ".17g"),
            "true" if self.converged else "false",
        )


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    ci: Tuple[float, float]
    dimensions: Tuple[int, ...]
    statistics: Tuple[float, ...]


@dataclass
class ScalingReport:
    scenario: str
    records: List[TrialRecord]
    per_dimension: Dict[int, Dict[str, float]]
    fit: Optional[SlopeFit]
    excluded: int = 0
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def slope(self) -> Optional[float]:
        return self.fit.slope if self.fit else None

    @property
    def slope_ci(self) -> Optional[Tuple[float, float]]:
        return self.fit.ci if self.fit else None

    def summary(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "records": len(self.records),
            "excluded_unconverged": self.excluded,
            "per_dimension": {str(k): v for k, v in self.per_dimension.items()},
            "slope": self.slope,
            "slope_ci": list(self.slope_ci) if self.slope_ci else None,
            **self.extras,
        }


def _median_or_mean(values: Sequence[float], statistic: str) -> float:
    return float(np.median(values) if statistic == "median" else np.mean(values))


def fit_slope(
    records: Sequence[TrialRecord],
    statistic: str = "median",
    n_boot: int | None = None,
    seed: int = 0,
) -> SlopeFit:
    """Least-squares slope of ``log(statistic(mse))`` against ``log(dimension)``.

    Unconverged trials are ignored. Dimensions whose statistic is not positive
    are dropped with a warning. The confidence interval is the 2.5/97.5
    percentile band of slopes refitted on trial-resampled (with replacement)
    records, ``n_boot`` times (``Config.BOOTSTRAP_RESAMPLES`` by default).

    Raises:
        ArgumentError: If the records span fewer than three dimensions.
        NumericFailureError: If fewer than two dimensions survive exclusion.
    """

    if statistic not in ("median", "mean"):
        raise ArgumentError(f"statistic must be 'median' or 'mean', got '{statistic}'")
    n_boot = Config.BOOTSTRAP_RESAMPLES if n_boot is None else n_boot

    groups: Dict[int, List[float]] = {}
    for rec in records:
        if rec.converged:
            groups.setdefault(rec.dimension, []).append(rec.mse)
    if len(groups) < 3:
        raise ArgumentError(f"slope fit needs at least 3 distinct dimensions, got {len(groups)}")

    dims: List[int] = []
    samples: List[np.ndarray] = []
    stats: List[float] = []
    for dim in sorted(groups):
        values = np.asarray(groups[dim], dtype=np.float64)
        value = _median_or_mean(values, statistic)
        if not value > 0:
            logger.warning("dimension %d has %s mse %.3e; excluded from slope fit", dim, statistic, value)
            continue
        dims.append(dim)
        samples.append(values)
        stats.append(value)
    if len(dims) < 2:
        raise NumericFailureError("fewer than two dimensions with positive error remain")

    log_d = np.log(np.asarray(dims, dtype=np.float64))
    slope, intercept = np.polyfit(log_d, np.log(stats), 1)

    rng = np.random.default_rng(seed)
    boot: List[float] = []
    for _ in range(n_boot):
        resampled = [_median_or_mean(rng.choice(v, size=v.size, replace=True), statistic) for v in samples]
        if min(resampled) > 0:
            boot.append(float(np.polyfit(log_d, np.log(resampled), 1)[0]))
    if boot:
        lo, hi = np.percentile(boot, [2.5, 97.5])
        ci = (float(min(lo, slope)), float(max(hi, slope)))
    else:
        ci = (float(slope), float(slope))

    return SlopeFit(
        slope=float(slope),
        intercept=float(intercept),
        ci=ci,
        dimensions=tuple(dims),
        statistics=tuple(stats),
    )


def stream_for(dimension: int, trial: int) -> int:
    return dimension * STREAM_STRIDE + trial


def run_trial(cfg: ScenarioConfig, dimension: int, trial: int) -> TrialRecord:
    """Generate and solve one planted instance; pure in ``(cfg, dimension, trial)``."""

    stream = stream_for(dimension, trial)
    seeded = SeededRng(cfg.seed, stream)
    rng = seeded.generator()
    converged = True
    reference = None

    if cfg.scenario == "thm1":
        inst = gen_exact_rank_instance(
            dimension, cfg.d, cfg.d2, cfg.r, cfg.sigma, cfg.epsilon, rng, seed=cfg.seed, stream=stream
        )
        fit = solve_rank_constrained(inst.x_check, inst.observation, cfg.r)
        mse = inst.mse(fit.m_hat)
    elif cfg.scenario == "thm2":
        inst = gen_approx_rank_instance(
            dimension, dimension, dimension, cfg.r, cfg.alpha, "bounded_uniform", cfg.beta, rng,
            seed=cfg.seed, stream=stream,
        )
        result = solve_constrained(inst.observation, PsiParams(inst.x_check, cfg.alpha, cfg.r))
        mse = inst.mse(result.m_hat)
        converged = result.diagnostics.converged
    elif cfg.scenario == "thm3":
        inst = gen_approx_rank_instance(
            dimension, dimension, dimension, cfg.r, cfg.alpha, "gaussian", cfg.sigma, rng,
            relu=True, seed=cfg.seed, stream=stream,
        )
        p = PsiParams(inst.x_check, cfg.alpha, cfg.r)
        mle = solve_mle(CensoredObservation(inst.observation, cfg.sigma), p)
        mse = inst.mse(mle.m_hat)
        converged = mle.converged
        reference = inst.mse(solve_constrained(inst.y + inst.g, p).m_hat)
    elif cfg.scenario == "compress":
        ranks = [cfg.r, cfg.r]
        model = gen_mlp([dimension, dimension, dimension], rng, ranks, noise=cfg.sigma)
        x0 = rng.standard_normal((cfg.calibration_samples, dimension))
        _, report = compress_model(model, x0, ranks, "closed_form")
        mse = report.output_mse
        reference, _ = evaluate(model, truncate_model(model, ranks), x0)
    else:
        raise ArgumentError(f"scenario '{cfg.scenario}' has no trials; use verify_scalar_lemmas")

    return TrialRecord(
        scenario=cfg.scenario,
        dimension=dimension,
        trial=trial,
        seed=seeded.stream_seed(),
        mse=mse,
        converged=converged,
        reference_mse=reference,
    )


def _per_dimension(records: Sequence[TrialRecord]) -> Dict[int, Dict[str, float]]:
    out: Dict[int, Dict[str, float]] = {}
    for dim in sorted({rec.dimension for rec in records}):
        values = [rec.mse for rec in records if rec.dimension == dim and rec.converged]
        out[dim] = {
            "n": len(values),
            "mean": float(np.mean(values)) if values else math.nan,
            "median": float(np.median(values)) if values else math.nan,
        }
    return out


def _extras(cfg: ScenarioConfig, records: Sequence[TrialRecord]) -> Dict[str, Any]:
    if cfg.scenario == "thm3":
        ratios = {}
        for dim in sorted({rec.dimension for rec in records}):
            pairs = [rec for rec in records if rec.dimension == dim and rec.converged]
            if pairs:
                reference = float(np.median([rec.reference_mse for rec in pairs]))
                mle = float(np.median([rec.mse for rec in pairs]))
                ratios[str(dim)] = mle / reference if reference > 0 else math.inf
        return {
            "sanity_band": {
                "label": SANITY_BAND_LABEL,
                "limit": SANITY_BAND_LIMIT,
                "median_ratio_censored_to_uncensored": ratios,
                "passed": all(ratio <= SANITY_BAND_LIMIT for ratio in ratios.values()),
            }
        }
    if cfg.scenario == "compress":
        wins = sum(1 for rec in records if rec.mse <= rec.reference_mse)
        return {"dominance_fraction": wins / len(records)}
    if cfg.scenario == "thm1" and cfg.epsilon > 0:
        bound = 16.0 * cfg.r * cfg.epsilon * min(cfg.d, cfg.d2)
        worst = max(rec.mse for rec in records)
        return {"epsilon_floor": {"bound": bound, "max_mse": worst, "passed": worst <= bound}}
    return {}


def summarize(cfg: ScenarioConfig, records: Sequence[TrialRecord]) -> ScalingReport:
    records = sorted(records, key=lambda rec: (rec.dimension, rec.trial))
    excluded = sum(1 for rec in records if not rec.converged)
    if excluded:
        logger.warning("%d unconverged trials excluded from the slope fit", excluded)

    fit = None
    try:
        fit = fit_slope(records, n_boot=cfg.bootstrap, seed=cfg.seed)
    except (ArgumentError, NumericFailureError) as exc:
        logger.warning("no slope fitted for %s: %s", cfg.scenario, exc)

    return ScalingReport(
        scenario=cfg.scenario,
        records=list(records),
        per_dimension=_per_dimension(records),
        fit=fit,
        excluded=excluded,
        extras=_extras(cfg, records),
    )


class ScenarioRunner:
    """Run a scenario's trials concurrently and stream records to CSV."""

    def __init__(
        self,
        cfg: ScenarioConfig,
        webhook: WebhookClient | None = None,
        *,
        run_id: str | None = None,
    ) -> None:
        if cfg.scenario == "verify":
            raise ArgumentError("the verify scenario has no trials; use verify_scalar_lemmas")
        self.cfg = cfg
        self.webhook = webhook
        self.run_id = run_id or f"{cfg.scenario}-{uuid.uuid4().hex[:8]}"

    async def run(self) -> ScalingReport:
        cfg = self.cfg
        await self._notify("started", {"scenario": cfg.scenario, "sweep": cfg.sweep, "trials": cfg.trials})

        records: List[TrialRecord] = []
        try:
            writer = _CsvSink(cfg.out)
            with writer:
                for dimension in cfg.sweep:
                    batch = await self._run_dimension(dimension)
                    writer.write(batch)
                    records.extend(batch)
                    median = float(np.median([rec.mse for rec in batch]))
                    logger.info(
                        "%s d=%d: %d trials, median mse %.4e", cfg.scenario, dimension, len(batch), median
                    )
                    await self._notify(
                        "dimension_completed", {"dimension": dimension, "median_mse": median}
                    )
            report = summarize(cfg, records)
        except Exception as exc:
            await self._notify("failed", {"error": str(exc)})
            raise

        await self._notify("completed", report.summary())
        return report

    async def _run_dimension(self, dimension: int) -> List[TrialRecord]:
        semaphore = asyncio.Semaphore(self.cfg.workers)

        async def one(trial: int) -> TrialRecord:
            async with semaphore:
                return await asyncio.to_thread(run_trial, self.cfg, dimension, trial)

        batch = await asyncio.gather(*(one(trial) for trial in range(self.cfg.trials)))
        return sorted(batch, key=lambda rec: rec.trial)

    async def _notify(self, status: str, data: Dict[str, Any]) -> None:
        if self.webhook is None:
            return
        try:
            await self.webhook.send_status_update(self.run_id, status, data)
        except Exception as exc:  # noqa: BLE001 - notifications never interrupt a run
            logger.warning("webhook update '%s' failed: %s", status, exc)


class _CsvSink:
    """Exclusive CSV writer; a no-op without an output path."""

    def __init__(self, path: Path | None) -> None:
        self.path = path
        self._handle = None
        self._writer = None

    def __enter__(self) -> "_CsvSink":
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = self.path.open("w", newline="", encoding="utf-8")
            self._writer = csv.writer(self._handle, lineterminator="\n")
            self._writer.writerow(CSV_HEADER)
        return self

    def write(self, batch: Sequence[TrialRecord]) -> None:
        if self._writer is None:
            return
        self._writer.writerows(rec.csv_row() for rec in batch)
        self._handle.flush()

    def __exit__(self, *exc_info: Any) -> None:
        if self._handle is not None:
            self._handle.close()


def run_scenario(cfg: ScenarioConfig, webhook: WebhookClient | None = None) -> ScalingReport:
    """Synchronous entry point around :class:`ScenarioRunner`."""

    return asyncio.run(ScenarioRunner(cfg, webhook).run())
