"""Layer-wise post-training low-rank compression of a multi-layer perceptron.

Every layer ``i`` is replaced by factors ``A·B`` of rank ``r_i`` chosen to
reproduce the layer's pre-activations on calibration data:

    M̂ ≈ argmin_{rank(Z) ≤ r} ‖X⁽ⁱ⁻¹⁾W⁽ⁱ⁾ − X̌⁽ⁱ⁻¹⁾Z‖

where ``X`` are activations of the original network and ``X̌`` those of the
network compressed so far. Biases are folded into the weights by appending a
ones column to the layer input, so a layer with bias has a weight of shape
``(N_{i-1} + 1) × N_i``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from dense_linalg import as_matrix, norms, svd
from errors import ArgumentError, CompressionError, LowRankError
from feasible_set import PsiParams
from matrix_io import read_matrix, write_matrix
from recover_convex import solve_constrained
from recover_rank import solve_rank_constrained
from recover_relu import CensoredObservation, solve_mle

logger = logging.getLogger(__name__)

Activation = Literal["relu", "identity"]
Method = Literal["closed_form", "convex", "relu_mle"]

ACTIVATIONS = ("relu", "identity")
METHODS = ("closed_form", "convex", "relu_mle")
MANIFEST_NAME = "model.json"


@dataclass(frozen=True, eq=False)
class Layer:
    """One dense layer: either a full ``weight`` or factors ``a @ b``."""

    activation: str = "relu"
    weight: Optional[np.ndarray] = None
    a: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ArgumentError(f"unknown activation '{self.activation}'")
        factored = self.a is not None or self.b is not None
        if (self.weight is None) == (not factored):
            raise ArgumentError("a layer needs either a weight or both factors, not both")
        if self.weight is not None:
            object.__setattr__(self, "weight", as_matrix(self.weight, name="weight"))
            return
        if self.a is None or self.b is None:
            raise ArgumentError("factored layers need both a and b")
        a = as_matrix(self.a, name="a")
        b = as_matrix(self.b, name="b")
        if a.shape[1] != b.shape[0]:
            raise ArgumentError(f"factor shapes {a.shape} and {b.shape} do not chain")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def is_factored(self) -> bool:
        return self.weight is None

    @property
    def in_dim(self) -> int:
        return int(self.a.shape[0] if self.is_factored else self.weight.shape[0])

    @property
    def out_dim(self) -> int:
        return int(self.b.shape[1] if self.is_factored else self.weight.shape[1])

    @property
    def rank(self) -> int | None:
        return int(self.a.shape[1]) if self.is_factored else None

    @property
    def param_count(self) -> int:
        if self.is_factored:
            return int(self.a.size + self.b.size)
        return int(self.weight.size)

    def dense(self) -> np.ndarray:
        return self.a @ self.b if self.is_factored else self.weight

    def pre_activation(self, x: np.ndarray) -> np.ndarray:
        if self.is_factored:
            return (x @ self.a) @ self.b
        return x @ self.weight

    def apply(self, x: np.ndarray) -> np.ndarray:
        z = self.pre_activation(x)
        return np.maximum(z, 0.0) if self.activation == "relu" else z


@dataclass(frozen=True, eq=False)
class MlpModel:
    layers: Tuple[Layer, ...]
    bias: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ArgumentError("a model needs at least one layer")
        extra = 1 if self.bias else 0
        for i in range(1, len(self.layers)):
            expected = self.layers[i - 1].out_dim + extra
            if self.layers[i].in_dim != expected:
                raise ArgumentError(
                    f"layer {i} expects {self.layers[i].in_dim} inputs but layer {i - 1} "
                    f"produces {expected}"
                )
        if self.layers[0].in_dim <= extra:
            raise ArgumentError("first layer has no inputs besides the bias")

    @property
    def dims(self) -> List[int]:
        """``[N₀, N₁, …, N_L]`` excluding the bias coordinate."""

        extra = 1 if self.bias else 0
        return [self.layers[0].in_dim - extra] + [layer.out_dim for layer in self.layers]

    @property
    def param_count(self) -> int:
        return sum(layer.param_count for layer in self.layers)

    def augment(self, x: np.ndarray) -> np.ndarray:
        if not self.bias:
            return x
        return np.hstack([x, np.ones((x.shape[0], 1))])


def forward_collect(model: MlpModel, x0: np.ndarray) -> List[np.ndarray]:
    """Return the activations ``X⁽⁰⁾, …, X⁽ᴸ⁾`` of ``model`` on ``x0``.

    ``X⁽⁰⁾`` is ``x0`` itself; the ones column used for bias folding is added
    internally and never appears in the returned activations.
    """

    x = as_matrix(x0, name="x0")
    if x.shape[1] != model.dims[0]:
        raise ArgumentError(f"input has {x.shape[1]} columns, model expects {model.dims[0]}")
    activations = [x]
    for layer in model.layers:
        x = layer.apply(model.augment(x))
        activations.append(x)
    return activations


class CompressionParams(BaseModel):
    """Solver parameters for :func:`compress_layer` and :func:`compress_model`."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    alpha: Optional[float] = Field(default=None, gt=0)
    sigma: float = Field(default=0.1, gt=0)
    tol: Optional[float] = Field(default=None, gt=0)
    max_iter: Optional[int] = Field(default=None, ge=1)
    calibration_source: Literal["compressed", "original"] = "compressed"


@dataclass(frozen=True)
class LayerReport:
    index: int
    rank: int
    params_before: int
    params_after: int
    activation_mse: float
    truncation_residual: float = 0.0
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "rank": self.rank,
            "params_before": self.params_before,
            "params_after": self.params_after,
            "activation_mse": self.activation_mse,
            "truncation_residual": self.truncation_residual,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class CompressionReport:
    method: str
    layers: List[LayerReport] = field(default_factory=list)
    output_mse: float = 0.0

    @property
    def params_before(self) -> int:
        return sum(layer.params_before for layer in self.layers)

    @property
    def params_after(self) -> int:
        return sum(layer.params_after for layer in self.layers)

    @property
    def compression_ratio(self) -> float:
        return self.params_after / self.params_before

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "params_before": self.params_before,
            "params_after": self.params_after,
            "compression_ratio": self.compression_ratio,
            "output_mse": self.output_mse,
            "layers": [layer.to_dict() for layer in self.layers],
        }


def _mse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean((a - b) ** 2))


def balanced_factors(m: np.ndarray, r: int) -> Tuple[np.ndarray, np.ndarray]:
    """Split the rank-``r`` truncation of ``m`` as ``(U_r√s, √s V_rᵀ)``."""

    factors = svd(m)
    if not 1 <= r <= factors.k:
        raise ArgumentError(f"rank {r} out of range [1, {factors.k}]")
    root = np.sqrt(factors.s[:r])
    return factors.u[:, :r] * root, root[:, None] * factors.v[:, :r].T


def _solve_layer(
    x_comp: np.ndarray,
    target: np.ndarray,
    r: int,
    method: str,
    params: CompressionParams,
) -> Tuple[np.ndarray, bool]:
    if method == "closed_form":
        return solve_rank_constrained(x_comp, target, r).m_hat, True

    alpha = params.alpha if params.alpha is not None else norms(target).max_abs
    if alpha <= 0:
        raise ArgumentError("layer pre-activations are identically zero; alpha cannot be estimated")
    p = PsiParams(x_check=x_comp, alpha=alpha, r=r)
    if method == "convex":
        result = solve_constrained(target, p, tol=params.tol)
        return result.m_hat, result.diagnostics.converged
    obs = CensoredObservation(z=np.maximum(target, 0.0), sigma=params.sigma)
    mle = solve_mle(obs, p, projection_tol=params.tol, max_iter=params.max_iter)
    return mle.m_hat, mle.converged


def compress_layer(
    x_orig: np.ndarray,
    x_comp: np.ndarray,
    w: np.ndarray,
    r: int,
    method: str = "closed_form",
    params: CompressionParams | None = None,
    *,
    index: int = 0,
) -> Tuple[Tuple[np.ndarray, np.ndarray], LayerReport]:
    """Fit rank-``r`` factors of one layer from calibration activations.

    Args:
        x_orig: Inputs of the layer in the original network, ``m × N_{i-1}``.
        x_comp: Inputs of the layer in the compressed prefix, same shape.
        w: The original weight ``N_{i-1} × N_i``.
        r: Target rank, ``1 ≤ r ≤ min(w.shape)``.
        method: ``closed_form``, ``convex`` or ``relu_mle``.
        params: Solver parameters; defaults when ``None``.
        index: Layer index recorded in the report.

    Returns:
        ``((A, B), report)``. Approximately-low-rank solutions from the convex
        and MLE paths are truncated to rank ``r`` and the Frobenius size of the
        discarded part is recorded as ``truncation_residual``.
    """

    params = params or CompressionParams()
    if method not in METHODS:
        raise ArgumentError(f"unknown method '{method}', expected one of {METHODS}")
    x_orig = as_matrix(x_orig, name="x_orig")
    x_comp = as_matrix(x_comp, name="x_comp")
    w = as_matrix(w, name="w")
    if x_orig.shape != x_comp.shape:
        raise ArgumentError(f"x_orig {x_orig.shape} and x_comp {x_comp.shape} differ")
    if x_orig.shape[1] != w.shape[0]:
        raise ArgumentError(f"activations have {x_orig.shape[1]} columns, weight has {w.shape[0]} rows")
    if not 1 <= r <= min(w.shape):
        raise ArgumentError(f"rank {r} out of range [1, {min(w.shape)}]")

    target = x_orig @ w
    m_hat, converged = _solve_layer(x_comp, target, r, method, params)
    a, b = balanced_factors(m_hat, r)
    truncation_residual = float(np.linalg.norm(m_hat - a @ b))

    report = LayerReport(
        index=index,
        rank=r,
        params_before=int(w.size),
        params_after=int(r * (w.shape[0] + w.shape[1])),
        activation_mse=_mse(target, (x_comp @ a) @ b),
        truncation_residual=truncation_residual,
        converged=converged,
    )
    logger.debug(
        "layer %d compressed to rank %d (%s): activation mse %.3e",
        index,
        r,
        method,
        report.activation_mse,
    )
    return (a, b), report


def _check_ranks(model: MlpModel, ranks: Sequence[int]) -> List[int]:
    ranks = [int(r) for r in ranks]
    if len(ranks) != len(model.layers):
        raise ArgumentError(f"got {len(ranks)} ranks for a model with {len(model.layers)} layers")
    return ranks


def compress_model(
    model: MlpModel,
    x0: np.ndarray,
    ranks: Sequence[int],
    method: str = "closed_form",
    params: CompressionParams | None = None,
) -> Tuple[MlpModel, CompressionReport]:
    """Compress every layer in order, chaining compressed activations.

    With ``calibration_source="compressed"`` (the default) layer ``i`` is
    fitted on the activations of the already-compressed prefix; with
    ``"original"`` both sides use the original network's activations.

    Raises:
        CompressionError: If any layer fails; the error names the layer index.
    """

    params = params or CompressionParams()
    ranks = _check_ranks(model, ranks)
    x_orig = as_matrix(x0, name="x0")
    if x_orig.shape[1] != model.dims[0]:
        raise ArgumentError(f"calibration data has {x_orig.shape[1]} columns, model expects {model.dims[0]}")
    x_comp = x_orig

    compressed_layers: List[Layer] = []
    reports: List[LayerReport] = []
    for i, (layer, r) in enumerate(zip(model.layers, ranks)):
        inputs_orig = model.augment(x_orig)
        inputs_comp = inputs_orig if params.calibration_source == "original" else model.augment(x_comp)
        try:
            (a, b), report = compress_layer(
                inputs_orig, inputs_comp, layer.dense(), r, method, params, index=i
            )
        except LowRankError as exc:
            raise CompressionError(i, str(exc)) from exc

        new_layer = Layer(activation=layer.activation, a=a, b=b)
        compressed_layers.append(new_layer)
        reports.append(report)
        x_orig = layer.apply(inputs_orig)
        x_comp = new_layer.apply(model.augment(x_comp))

    compressed = MlpModel(layers=tuple(compressed_layers), bias=model.bias)
    report = CompressionReport(method=method, layers=reports, output_mse=_mse(x_orig, x_comp))
    logger.info(
        "compressed %d layers with %s: ratio %.3f, output mse %.3e",
        len(reports),
        method,
        report.compression_ratio,
        report.output_mse,
    )
    return compressed, report


def truncate_model(model: MlpModel, ranks: Sequence[int]) -> MlpModel:
    """Data-agnostic baseline: replace every weight by its best rank-``r`` approximation."""

    ranks = _check_ranks(model, ranks)
    layers = []
    for layer, r in zip(model.layers, ranks):
        a, b = balanced_factors(layer.dense(), r)
        layers.append(Layer(activation=layer.activation, a=a, b=b))
    return MlpModel(layers=tuple(layers), bias=model.bias)


def evaluate(model_a: MlpModel, model_b: MlpModel, x: np.ndarray) -> Tuple[float, List[float]]:
    """Mean squared activation differences of two models on ``x``.

    Returns:
        ``(output_mse, per_layer_mse)`` where ``per_layer_mse[i]`` compares the
        outputs of layer ``i`` and ``output_mse`` is the last entry.
    """

    if model_a.dims != model_b.dims or model_a.bias != model_b.bias:
        raise ArgumentError(
            f"architectures differ: {model_a.dims} (bias={model_a.bias}) vs "
            f"{model_b.dims} (bias={model_b.bias})"
        )
    acts_a = forward_collect(model_a, x)
    acts_b = forward_collect(model_b, x)
    per_layer = [_mse(a, b) for a, b in zip(acts_a[1:], acts_b[1:])]
    return per_layer[-1], per_layer


class LayerEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    weight: Optional[str] = None
    a: Optional[str] = None
    b: Optional[str] = None
    activation: Activation = "relu"

    @model_validator(mode="after")
    def _one_form(self) -> "LayerEntry":
        dense = self.weight is not None
        any_factor = self.a is not None or self.b is not None
        if dense == any_factor or (any_factor and (self.a is None or self.b is None)):
            raise ValueError("a layer entry needs either 'weight' or both 'a' and 'b'")
        return self


class ModelManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    layers: List[LayerEntry] = Field(min_length=1)
    bias: bool = False


def save_model(model: MlpModel, directory: str | Path) -> Path:
    """Write ``model.json`` plus one LRM1 file per weight or factor."""

    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, layer in enumerate(model.layers, start=1):
        if layer.is_factored:
            write_matrix(root / f"l{i}_a.lrm", layer.a)
            write_matrix(root / f"l{i}_b.lrm", layer.b)
            entries.append(LayerEntry(a=f"l{i}_a.lrm", b=f"l{i}_b.lrm", activation=layer.activation))
        else:
            write_matrix(root / f"w{i}.lrm", layer.weight)
            entries.append(LayerEntry(weight=f"w{i}.lrm", activation=layer.activation))
    manifest = ModelManifest(layers=entries, bias=model.bias)
    path = root / MANIFEST_NAME
    path.write_text(manifest.model_dump_json(indent=2, exclude_none=True), encoding="utf-8")
    return path


def load_model(path: str | Path) -> MlpModel:
    """Load a model from a manifest file (or a directory holding ``model.json``)."""

    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        manifest = ModelManifest.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError) as exc:
        raise ArgumentError(f"cannot read model manifest '{path}': {exc}") from exc
    except ValidationError as exc:
        raise ArgumentError(f"invalid model manifest '{path}': {exc}") from exc

    root = path.parent
    layers = []
    for entry in manifest.layers:
        if entry.weight is not None:
            layers.append(Layer(activation=entry.activation, weight=read_matrix(root / entry.weight)))
        else:
            layers.append(
                Layer(
                    activation=entry.activation,
                    a=read_matrix(root / entry.a),
                    b=read_matrix(root / entry.b),
                )
            )
    return MlpModel(layers=tuple(layers), bias=manifest.bias)
