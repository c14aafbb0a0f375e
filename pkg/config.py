"""``LOWRANK_*`` environment settings for solvers, harness and webhook.

Read once at import (a ``.env`` file in the working directory is honoured).
Solver entry points use these as defaults whenever ``tol`` or ``max_iter`` is
passed as ``None``; the harness takes its seed, worker count and bootstrap
resamples from here.
"""

from __future__ import annotations

import os
from typing import Any, Dict

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))


class Config:
    """Container for application configuration values."""

    # Reproducibility
    SEED: int = int(os.getenv("LOWRANK_SEED", "7"))

    # Feasible-set projection (Dykstra)
    PROJECTION_TOL: float = float(os.getenv("LOWRANK_TOL", "1e-7"))
    PROJECTION_MAX_ITER: int = int(os.getenv("LOWRANK_MAX_ITER", "2000"))

    # Censored maximum likelihood
    MLE_TOL: float = float(os.getenv("LOWRANK_MLE_TOL", "1e-9"))
    MLE_MAX_ITER: int = int(os.getenv("LOWRANK_MLE_MAX_ITER", "500"))

    # Harness execution
    WORKERS: int = int(os.getenv("LOWRANK_WORKERS", str(_default_workers())))
    BOOTSTRAP_RESAMPLES: int = int(os.getenv("LOWRANK_BOOTSTRAP", "1000"))
    LOG_LEVEL: str = os.getenv("LOWRANK_LOG_LEVEL", "INFO")

    # Optional run-status webhook
    WEBHOOK_URL: str | None = os.getenv("LOWRANK_WEBHOOK_URL")
    WEBHOOK_SECRET: str | None = os.getenv("LOWRANK_WEBHOOK_SECRET")

    @classmethod
    def validate(cls) -> bool:
        """Validate that all configuration values are usable.

        Returns:
            True if validation succeeds.

        Raises:
            ValueError: If a tolerance, budget or worker count is not positive.
        """

        if cls.PROJECTION_TOL <= 0 or cls.MLE_TOL <= 0:
            raise ValueError("LOWRANK_TOL and LOWRANK_MLE_TOL must be positive")
        if cls.PROJECTION_MAX_ITER < 1 or cls.MLE_MAX_ITER < 1:
            raise ValueError("LOWRANK_MAX_ITER and LOWRANK_MLE_MAX_ITER must be at least 1")
        if cls.WORKERS < 1:
            raise ValueError("LOWRANK_WORKERS must be at least 1")
        if cls.BOOTSTRAP_RESAMPLES < 1:
            raise ValueError("LOWRANK_BOOTSTRAP must be at least 1")
        return True

    @classmethod
    def as_dict(cls) -> Dict[str, Any]:
        """Return a serialisable snapshot of configuration values."""

        return {
            "SEED": cls.SEED,
            "PROJECTION_TOL": cls.PROJECTION_TOL,
            "PROJECTION_MAX_ITER": cls.PROJECTION_MAX_ITER,
            "MLE_TOL": cls.MLE_TOL,
            "MLE_MAX_ITER": cls.MLE_MAX_ITER,
            "WORKERS": cls.WORKERS,
            "BOOTSTRAP_RESAMPLES": cls.BOOTSTRAP_RESAMPLES,
            "LOG_LEVEL": cls.LOG_LEVEL,
            "WEBHOOK_URL": cls.WEBHOOK_URL,
            "WEBHOOK_SECRET": "***" if cls.WEBHOOK_SECRET else None,
        }
