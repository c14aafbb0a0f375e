"""Tests for environment-backed defaults."""

import numpy as np
import pytest

from config import Config
from feasible_set import PsiParams, project_psi
from harness import ScenarioConfig


def test_validate_accepts_defaults():
    assert Config.validate()


@pytest.mark.parametrize(
    "name, value",
    [
        ("PROJECTION_TOL", 0.0),
        ("MLE_TOL", -1e-9),
        ("PROJECTION_MAX_ITER", 0),
        ("WORKERS", 0),
        ("BOOTSTRAP_RESAMPLES", 0),
    ],
)
def test_validate_rejects_unusable_values(monkeypatch, name, value):
    monkeypatch.setattr(Config, name, value)
    with pytest.raises(ValueError):
        Config.validate()


def test_as_dict_masks_webhook_secret(monkeypatch):
    monkeypatch.setattr(Config, "WEBHOOK_SECRET", "hunter2")
    snapshot = Config.as_dict()
    assert snapshot["WEBHOOK_SECRET"] == "***"
    assert "hunter2" not in str(snapshot)
    monkeypatch.setattr(Config, "WEBHOOK_SECRET", None)
    assert Config.as_dict()["WEBHOOK_SECRET"] is None


def test_projection_budget_defaults_come_from_config(monkeypatch):
    monkeypatch.setattr(Config, "PROJECTION_TOL", 1e-12)
    monkeypatch.setattr(Config, "PROJECTION_MAX_ITER", 1)
    rng = np.random.default_rng(3)
    p = PsiParams(x_check=rng.standard_normal((8, 5)), alpha=0.1, r=2)
    _, diag = project_psi(5.0 * rng.standard_normal((8, 6)), p)
    assert diag.iterations == 1
    assert not diag.converged


def test_scenario_defaults_come_from_config(monkeypatch):
    monkeypatch.setattr(Config, "SEED", 123)
    monkeypatch.setattr(Config, "WORKERS", 3)
    monkeypatch.setattr(Config, "BOOTSTRAP_RESAMPLES", 17)
    cfg = ScenarioConfig(scenario="thm1", sweep=[16])
    assert (cfg.seed, cfg.workers, cfg.bootstrap) == (123, 3, 17)
