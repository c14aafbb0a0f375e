"""Exception hierarchy shared by the recovery toolkit."""

from __future__ import annotations

from typing import Any, Dict


class LowRankError(RuntimeError):
    """Base class for every error raised by the toolkit."""

    def to_payload(self) -> Dict[str, Any]:
        """Return a machine-readable description of the error."""

        return {"error": type(self).__name__, "message": str(self)}


class ArgumentError(LowRankError, ValueError):
    """Raised when an argument is out of range or has the wrong shape."""


class RankDeficientError(LowRankError):
    """Raised when a matrix must have full column rank but does not."""


class NumericFailureError(LowRankError):
    """Raised when a numerical kernel (SVD, eigensolver) fails to converge."""


class GenerationError(LowRankError):
    """Raised when a synthetic instance cannot satisfy its hypotheses."""


class MatrixFormatError(LowRankError, ValueError):
    """Raised when an LRM1 payload is malformed or truncated."""


class CompressionError(LowRankError):
    """Raised when compressing a layer fails; carries the layer index."""

    def __init__(self, layer_index: int, message: str) -> None:
        super().__init__(f"layer {layer_index}: {message}")
        self.layer_index = layer_index

    def to_payload(self) -> Dict[str, Any]:
        payload = super().to_payload()
        payload["layer_index"] = self.layer_index
        return payload
