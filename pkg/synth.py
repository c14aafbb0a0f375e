"""Deterministic generators for planted recovery instances and MLPs.

All randomness flows through :class:`SeededRng`: numpy's ``PCG64`` bit
generator seeded by ``SeedSequence(seed, spawn_key=(stream_id,))``. The pair
``(seed, stream_id)`` fully determines every generated object, independently
of platform, thread count and the order in which trials are scheduled.

Generators assert the hypotheses of the instance they build (rank, norm
bounds, approximate low rank) and raise :class:`GenerationError` rather than
return an instance that violates them.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from compress_pipeline import Layer, MlpModel
from dense_linalg import is_approx_rank, norms, numerical_rank, pinv, span_basis
from errors import ArgumentError, GenerationError
from matrix_io import read_matrix, write_matrix

logger = logging.getLogger(__name__)

NoiseKind = Literal["bounded_uniform", "gaussian"]
InstanceKind = Literal["exact_rank", "approx_rank", "approx_rank_relu"]

_U64 = 2**64
_MAX_RETRIES = 10
SIDECAR_NAME = "instance.json"


class SeededRng:
    """Reproducible random stream keyed by ``(seed, stream_id)``."""

    def __init__(self, seed: int, stream_id: int = 0) -> None:
        if not 0 <= seed < _U64 or not 0 <= stream_id < _U64:
            raise ArgumentError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)

    def sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))

    def generator(self) -> np.random.Generator:
        """A fresh generator at the start of the stream."""

        return np.random.Generator(np.random.PCG64(self.sequence()))

    def stream_seed(self) -> int:
        """64-bit digest of the stream, recorded in reports."""

        return int(self.sequence().generate_state(1, dtype=np.uint64)[0])

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, stream_id={self.stream_id})"


class InstanceParams(BaseModel):
    """Parameters of a planted instance; also its JSON sidecar."""

    model_config = ConfigDict(extra="forbid")

    d1: int = Field(ge=1)
    d: int = Field(ge=1)
    d2: int = Field(ge=1)
    r: int = Field(ge=1)
    alpha: Optional[float] = None
    sigma: float = Field(default=0.0, ge=0)
    beta: Optional[float] = None
    epsilon: float = Field(default=0.0, ge=0)
    seed: Optional[int] = None
    stream: Optional[int] = None
    kind: InstanceKind


@dataclass(frozen=True, eq=False)
class PlantedInstance:
    x_check: np.ndarray
    m: np.ndarray
    y: np.ndarray
    g: np.ndarray
    e: Optional[np.ndarray]
    observation: np.ndarray
    params: InstanceParams

    def mse(self, m_hat: np.ndarray) -> float:
        """``‖X̌M − X̌M̂‖_F² / (d1·d2)``."""

        diff = self.y - self.x_check @ m_hat
        return float(np.sum(diff * diff) / diff.size)


def _check_dims(d1: int, d: int, d2: int, r: int) -> None:
    if not (d1 >= d >= r >= 1 and d2 >= r):
        raise ArgumentError(f"need d1 ≥ d ≥ r ≥ 1 and d2 ≥ r, got d1={d1}, d={d}, d2={d2}, r={r}")


def _full_rank_design(d1: int, d: int, rng: np.random.Generator) -> np.ndarray:
    x_check = rng.standard_normal((d1, d))
    if numerical_rank(x_check) < d:
        raise GenerationError(f"sampled {d1}x{d} design is rank deficient")
    return x_check


def _unit(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def _orthonormal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def gen_exact_rank_instance(
    d1: int,
    d: int,
    d2: int,
    r: int,
    sigma: float,
    epsilon: float,
    rng: np.random.Generator,
    *,
    seed: int | None = None,
    stream: int | None = None,
) -> PlantedInstance:
    """Planted instance for the closed-form rank-constrained estimator.

    ``X̌`` is standard Gaussian, ``M = (d×r Gaussian)(r×d2 Gaussian)/√r``,
    ``G`` is i.i.d. ``N(0, σ²)`` and ``E = √(ε·d1)·u vᵀ`` for random unit
    ``u, v``, so ``‖E‖_op² = ε·d1``. The observation is ``X̌M + G + E``.
    """

    _check_dims(d1, d, d2, r)
    if sigma < 0 or epsilon < 0:
        raise ArgumentError("sigma and epsilon must be nonnegative")

    x_check = _full_rank_design(d1, d, rng)
    m = rng.standard_normal((d, r)) @ rng.standard_normal((r, d2)) / math.sqrt(r)
    if numerical_rank(m) != r:
        raise GenerationError(f"planted weight has numerical rank {numerical_rank(m)}, expected {r}")
    y = x_check @ m
    g = sigma * rng.standard_normal((d1, d2))

    e = None
    observation = y + g
    if epsilon > 0:
        e = math.sqrt(epsilon * d1) * np.outer(_unit(rng, d1), _unit(rng, d2))
        op_sq = norms(e).operator ** 2
        if abs(op_sq - epsilon * d1) > 1e-10 * max(1.0, epsilon * d1):
            raise GenerationError(f"perturbation has ‖E‖_op² = {op_sq}, expected {epsilon * d1}")
        observation = observation + e

    params = InstanceParams(
        d1=d1, d=d, d2=d2, r=r, sigma=sigma, epsilon=epsilon, seed=seed, stream=stream, kind="exact_rank"
    )
    return PlantedInstance(x_check=x_check, m=m, y=y, g=g, e=e, observation=observation, params=params)


def _spectrum(k: int, r: int, tail_ratio: float) -> np.ndarray:
    s = np.ones(k)
    if k > r:
        s[r:] = tail_ratio ** np.arange(1, k - r + 1)
    return s


def gen_approx_rank_instance(
    d1: int,
    d: int,
    d2: int,
    r: int,
    alpha: float,
    noise_kind: NoiseKind,
    noise_level: float,
    rng: np.random.Generator,
    *,
    relu: bool = False,
    tail_ratio: float = 0.1,
    seed: int | None = None,
    stream: int | None = None,
) -> PlantedInstance:
    """Planted approximately rank-``r`` instance in the column span of ``X̌``.

    ``Y₀`` has ``r`` unit singular values followed by a geometric tail
    (``tail_ratio``, ``tail_ratio²``, …) and is rescaled to ``‖Y₀‖∞ = α``.
    If ``‖Y₀‖_* ≤ ‖Y₀‖∞√(r·d1·d2)`` fails, the tail is shrunk tenfold and the
    draw repeated, at most ten times.

    Noise is uniform on ``[-β, β]`` (``bounded_uniform``) or ``N(0, σ²)``
    (``gaussian``) with ``noise_level`` the respective ``β`` or ``σ``. With
    ``relu`` the observation is ``max(Y₀ + G, 0)``.

    Raises:
        GenerationError: If no draw satisfies the approximate-rank condition.
    """

    _check_dims(d1, d, d2, r)
    if not alpha > 0:
        raise ArgumentError(f"alpha must be positive, got {alpha}")
    if noise_kind not in ("bounded_uniform", "gaussian"):
        raise ArgumentError(f"unknown noise kind '{noise_kind}'")
    if noise_level < 0:
        raise ArgumentError("noise_level must be nonnegative")
    if not 0 <= tail_ratio < 1:
        raise ArgumentError(f"tail_ratio must lie in [0, 1), got {tail_ratio}")

    x_check = _full_rank_design(d1, d, rng)
    basis = span_basis(x_check)
    k = min(d, d2)

    y0 = None
    ratio = tail_ratio
    for attempt in range(_MAX_RETRIES + 1):
        core = (_orthonormal(rng, d, k) * _spectrum(k, r, ratio)) @ _orthonormal(rng, d2, k).T
        candidate = basis @ core
        candidate *= alpha / np.max(np.abs(candidate))
        if is_approx_rank(candidate, r):
            y0 = candidate
            break
        logger.debug("approx-rank draw %d failed with tail ratio %.1e, shrinking tail", attempt, ratio)
        ratio *= 0.1
    if y0 is None:
        raise GenerationError(
            f"no {d1}x{d2} draw was approximately rank-{r} after {_MAX_RETRIES} retries"
        )

    m = pinv(x_check) @ y0
    y = x_check @ m
    if noise_kind == "bounded_uniform":
        g = rng.uniform(-noise_level, noise_level, size=(d1, d2))
        sigma, beta = 0.0, noise_level
    else:
        g = noise_level * rng.standard_normal((d1, d2))
        sigma, beta = noise_level, None

    observation = y + g
    if relu:
        observation = np.maximum(observation, 0.0)

    params = InstanceParams(
        d1=d1,
        d=d,
        d2=d2,
        r=r,
        alpha=alpha,
        sigma=sigma,
        beta=beta,
        seed=seed,
        stream=stream,
        kind="approx_rank_relu" if relu else "approx_rank",
    )
    return PlantedInstance(x_check=x_check, m=m, y=y, g=g, e=None, observation=observation, params=params)


def gen_mlp(
    layer_dims: Sequence[int],
    rng: np.random.Generator,
    ranks: Sequence[int] | None = None,
    *,
    noise: float = 0.0,
    bias: bool = False,
    activation: str = "relu",
    final_activation: str = "identity",
) -> MlpModel:
    """Random MLP with He-scaled Gaussian weights (variance ``2/fan_in``).

    With ``ranks`` every weight is an exact rank-``rᵢ`` product of Gaussian
    factors at the same scale, plus ``noise`` times a full He-scaled Gaussian
    perturbation when ``noise > 0``. The bias row counts towards ``fan_in``.
    """

    dims = [int(n) for n in layer_dims]
    if len(dims) < 2 or min(dims) < 1:
        raise ArgumentError(f"need at least two positive layer dims, got {dims}")
    n_layers = len(dims) - 1
    if ranks is not None:
        ranks = [int(r) for r in ranks]
        if len(ranks) != n_layers:
            raise ArgumentError(f"got {len(ranks)} ranks for {n_layers} layers")
        for i, r in enumerate(ranks):
            if not 1 <= r <= min(dims[i], dims[i + 1]):
                raise ArgumentError(f"rank {r} of layer {i} exceeds min({dims[i]}, {dims[i + 1]})")
    if noise < 0:
        raise ArgumentError("noise must be nonnegative")

    layers: List[Layer] = []
    for i in range(n_layers):
        fan_in = dims[i] + (1 if bias else 0)
        scale = math.sqrt(2.0 / fan_in)
        if ranks is None:
            w = scale * rng.standard_normal((fan_in, dims[i + 1]))
        else:
            r = ranks[i]
            w = (rng.standard_normal((fan_in, r)) @ rng.standard_normal((r, dims[i + 1]))) * (scale / math.sqrt(r))
            if noise > 0:
                w = w + noise * scale * rng.standard_normal((fan_in, dims[i + 1]))
            elif numerical_rank(w) != r:
                raise GenerationError(f"planted layer {i} has numerical rank {numerical_rank(w)}, expected {r}")
        act = final_activation if i == n_layers - 1 else activation
        layers.append(Layer(activation=act, weight=w))
    return MlpModel(layers=tuple(layers), bias=bias)


_MATRIX_FILES = ("x_check", "m", "y", "g", "observation")


def save_instance(instance: PlantedInstance, directory: str | Path) -> Path:
    """Dump an instance as LRM1 matrices plus ``instance.json``."""

    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    for name in _MATRIX_FILES:
        write_matrix(root / f"{name}.lrm", getattr(instance, name))
    if instance.e is not None:
        write_matrix(root / "e.lrm", instance.e)
    (root / SIDECAR_NAME).write_text(instance.params.model_dump_json(indent=2), encoding="utf-8")
    return root


def load_instance(directory: str | Path) -> PlantedInstance:
    root = Path(directory)
    sidecar = root / SIDECAR_NAME
    try:
        params = InstanceParams.model_validate(json.loads(sidecar.read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError) as exc:
        raise ArgumentError(f"cannot read instance sidecar '{sidecar}': {exc}") from exc
    except ValidationError as exc:
        raise ArgumentError(f"invalid instance sidecar '{sidecar}': {exc}") from exc

    matrices = {name: read_matrix(root / f"{name}.lrm") for name in _MATRIX_FILES}
    e_path = root / "e.lrm"
    e = read_matrix(e_path) if e_path.exists() else None
    return PlantedInstance(e=e, params=params, **matrices)
