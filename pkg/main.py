"""Command-line entry point for simulations, compression and lemma checks."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional

from pydantic import ValidationError

from compress_pipeline import METHODS, CompressionParams, compress_model, evaluate, load_model, save_model
from config import Config
from errors import ArgumentError, LowRankError
from harness import ScenarioConfig, run_scenario
from matrix_io import read_matrix
from recover_relu import verify_scalar_lemmas
from webhook_client import WebhookClient

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

_SCENARIO_FLAGS = ("scenario", "sweep", "trials", "seed", "out", "r", "sigma", "beta", "alpha", "epsilon", "d", "d2")


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from exc


class _JsonErrorParser(argparse.ArgumentParser):
    """Raise :class:`ArgumentError` instead of printing usage and exiting."""

    def error(self, message: str) -> NoReturn:
        raise ArgumentError(f"{self.prog}: {message}")


def _build_parser() -> argparse.ArgumentParser:
    parser = _JsonErrorParser(
        description="Data-driven low-rank recovery, MLP compression and scaling studies.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument(
        "--log-level",
        type=str.upper,
        choices=LOG_LEVELS,
        default=Config.LOG_LEVEL,
        help="Logging level.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Run a Monte-Carlo scaling scenario.")
    sim.add_argument("--config", type=Path, help="JSON scenario configuration; flags override it.")
    sim.add_argument("--scenario", choices=["thm1", "thm2", "thm3", "compress"])
    sim.add_argument("--sweep", type=_int_list, help="Comma-separated, strictly increasing dimensions.")
    sim.add_argument("--trials", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", type=Path, help="CSV output path.")
    sim.add_argument("--r", type=int)
    sim.add_argument("--sigma", type=float)
    sim.add_argument("--beta", type=float)
    sim.add_argument("--alpha", type=float)
    sim.add_argument("--epsilon", type=float)
    sim.add_argument("--d", type=int)
    sim.add_argument("--d2", type=int)
    sim.add_argument("--webhook-url", help="Status webhook; defaults to LOWRANK_WEBHOOK_URL.")

    comp = sub.add_parser("compress", help="Compress an MLP layer by layer.")
    comp.add_argument("--model", type=Path, required=True, help="Model manifest (model.json).")
    comp.add_argument("--calib", type=Path, required=True, help="Calibration data (LRM1).")
    comp.add_argument("--ranks", type=_int_list, required=True, help="Comma-separated ranks per layer.")
    comp.add_argument("--method", choices=METHODS, default="closed_form")
    comp.add_argument("--out", type=Path, required=True, help="Output directory.")
    comp.add_argument("--alpha", type=float, help="Entry bound for convex/relu_mle; estimated when omitted.")
    comp.add_argument("--sigma", type=float, default=0.1, help="Noise level for relu_mle.")
    comp.add_argument("--calibration-source", choices=["compressed", "original"], default="compressed")

    ev = sub.add_parser("eval", help="Compare two models on data.")
    ev.add_argument("--model-a", type=Path, required=True)
    ev.add_argument("--model-b", type=Path, required=True)
    ev.add_argument("--data", type=Path, required=True)

    lem = sub.add_parser("verify-lemmas", help="Check the scalar inequalities numerically.")
    lem.add_argument("--config", type=Path, help="JSON configuration with scenario 'verify'.")
    lem.add_argument("--alpha", type=float, default=2.0)
    lem.add_argument("--sigma", type=float, default=1.0)
    lem.add_argument("--grid", type=int, default=100_000)
    lem.add_argument("--pairs", type=int, default=10_000)
    return parser


def _load_json(path: Path) -> Dict[str, Any]:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ArgumentError(f"cannot read configuration '{path}': {exc}") from exc


def _scenario_config(args: argparse.Namespace) -> ScenarioConfig:
    values: Dict[str, Any] = _load_json(args.config) if args.config else {}
    for name in _SCENARIO_FLAGS:
        value = getattr(args, name)
        if value is not None:
            values[name] = value
    return ScenarioConfig.model_validate(values)


def _emit(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, indent=2, ensure_ascii=False, default=str))


def _run_lemmas(alpha: float, sigma: float, grid: int, pairs: int = 10_000) -> int:
    report = verify_scalar_lemmas(alpha, sigma, grid, n_pairs=pairs)
    _emit(report.to_dict())
    if not report.passed:
        print(
            json.dumps({"error": "LemmaCheckFailed", "message": f"margins below floor: {report.failures()}"}),
            file=sys.stderr,
        )
        return 1
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _scenario_config(args)
    if cfg.scenario == "verify":
        return _run_lemmas(cfg.alpha, cfg.sigma, cfg.grid)
    report = run_scenario(cfg, WebhookClient.from_config(args.webhook_url))
    _emit(report.summary())
    return 0


def _cmd_compress(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    calib = read_matrix(args.calib)
    params = CompressionParams(
        alpha=args.alpha, sigma=args.sigma, calibration_source=args.calibration_source
    )
    compressed, report = compress_model(model, calib, args.ranks, args.method, params)
    manifest = save_model(compressed, args.out)
    (args.out / "report.json").write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    _emit({"model": str(manifest), **report.to_dict()})
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    output_mse, per_layer = evaluate(load_model(args.model_a), load_model(args.model_b), read_matrix(args.data))
    _emit({"output_mse": output_mse, "per_layer_mse": per_layer})
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    if args.config:
        cfg = ScenarioConfig.model_validate({"scenario": "verify", **_load_json(args.config)})
        return _run_lemmas(cfg.alpha, cfg.sigma, cfg.grid, args.pairs)
    return _run_lemmas(args.alpha, args.sigma, args.grid, args.pairs)


_COMMANDS = {
    "simulate": _cmd_simulate,
    "compress": _cmd_compress,
    "eval": _cmd_eval,
    "verify-lemmas": _cmd_verify,
}


def _report_error(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, ensure_ascii=False), file=sys.stderr)


def run(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv``, dispatch the subcommand and return the exit code."""

    try:
        args = _build_parser().parse_args(argv)
    except ArgumentError as exc:
        _report_error(exc.to_payload())
        return 2

    try:
        logging.basicConfig(level=args.log_level, format=LOG_FORMAT)
        Config.validate()
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        _report_error({"error": "ValidationError", "message": str(exc)})
        return 2
    except ArgumentError as exc:
        _report_error(exc.to_payload())
        return 2
    except LowRankError as exc:
        _report_error(exc.to_payload())
        return 1
    except ValueError as exc:
        _report_error({"error": "ConfigurationError", "message": str(exc)})
        return 2
    except OSError as exc:
        _report_error({"error": type(exc).__name__, "message": str(exc)})
        return 1
    except KeyboardInterrupt:
        _report_error({"error": "Interrupted", "message": "execution interrupted by user"})
        return 130


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
